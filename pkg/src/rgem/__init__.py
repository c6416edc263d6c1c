"""Regularized EM for Gaussian mixtures with cross-validated covariance shrinkage."""
