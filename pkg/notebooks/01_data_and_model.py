"""
Datasets, sample windows and the regularized logistic risk
==========================================================

A dataset is shuffled at most once. Every later view is a prefix of that
frozen order, so small windows nest inside large ones.
"""

import numpy as np

from dance import RiskSpec, RiskView, synth_logistic, window
from dance.data import parse_libsvm, partition, serialize_libsvm
from dance.model import full_grad, full_hvp, risk_value
from dance.solver import resolve_spec

# %% a synthetic problem around a planted separator
ds = synth_logistic(1000, 8, seed=0, margin=1.0)
print(ds.N, ds.d, "positives:", int((ds.labels > 0).sum()))

# %% libsvm text round trip
text = serialize_libsvm(ds.head(3))
print(text)
back = parse_libsvm(text)
print("round trip equal:", np.array_equal(back.features.toarray(), ds.head(3).features.toarray()))

# %% prefix windows and contiguous shards
small, large = window(ds, 100), window(ds, 400)
print("nested:", np.array_equal(small.y, large.y[:100]))
print([(r.start, r.stop) for r in partition(large, 3)])

# %% R_n(w) = mean log(1 + exp(-y x.w)) + (c V_n / 2) ||w||^2 with V_n = n**-gamma
spec = resolve_spec(RiskSpec(c=0.1, gamma=0.5), ds)  # M = max ||x||^2 / 4 over all rows
view = RiskView(spec, large)
print(f"V_n = {view.V:.4f}, c V_n = {view.lam:.4f}, M = {spec.M:.3f}")

w = np.random.default_rng(1).standard_normal(ds.d)
print("R_n(w) =", risk_value(view, w))

# %% derivatives against central differences
h = 1e-6
e0 = np.eye(ds.d)[0]
print("d/dw0:", full_grad(view, w)[0], (risk_value(view, w + h * e0) - risk_value(view, w - h * e0)) / (2 * h))
v = np.ones(ds.d)
fd = (full_grad(view, w + h * v) - full_grad(view, w - h * v)) / (2 * h)
print("hvp rel err:", np.linalg.norm(fd - full_hvp(view, w, v)) / np.linalg.norm(fd))
