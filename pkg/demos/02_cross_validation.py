"""How the validation loss picks a shrinkage penalty.

With few points and an isotropic truth the identity target is right, so the
loss keeps falling as the penalty grows. With plenty of correlated data the
target is wrong and the loss prefers a light touch.
"""

import numpy as np

from rgem.cv import CvConfig, select_eta
from rgem.data import ar1_covariance


def show(title, X, scale):
    rep = select_eta(X, np.arange(len(X)), scale, CvConfig(seed=0))
    print(f"\n{title}: chosen eta = {rep.eta:.4g}")
    for eta, err in zip(rep.grid, rep.errors):
        mark = "  <-" if eta == rep.eta else ""
        print(f"  eta {eta:>12.4g}   Err {err:>12.5f}{mark}")


rng = np.random.default_rng(0)
show("30 isotropic points in 20 dimensions", np.sqrt(2) * rng.standard_normal((30, 20)), 2.0)

L = np.linalg.cholesky(ar1_covariance(0.9, 5))
show("2000 AR(0.9) points in 5 dimensions", rng.standard_normal((2000, 5)) @ L.T, 1.0)
