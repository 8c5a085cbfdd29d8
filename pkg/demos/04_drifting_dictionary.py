"""
Tracking a drifting dictionary
==============================

Adding process noise ``QV`` before each update turns the filter into a
Kalman filter whose dictionary may wander. Here the generating dictionary
switches halfway through the stream. The plain filter has by then shrunk
its covariance and adapts slowly; with ``QV = q I`` the gain stays alive.
"""
# %%
import numpy as np

from streamfact.data import MaskedDataset, sample_order
from streamfact.experiments import snr
from streamfact.model import ModelConfig, init_state, reconstruct, run_pass

rng = np.random.default_rng(0)
m, n, k = 50, 150, 3
X = rng.random((k, n))
before = MaskedDataset(np.abs(rng.standard_normal((m, k))) @ X)
after = MaskedDataset(np.abs(rng.standard_normal((m, k))) @ X)

# %%
for q in (0.0, 1e-3, 1e-2):
    cfg = ModelConfig(rank=k, lam=2.0, ridge=0.0, init_seed=1,
                      QV=q * np.eye(k) if q else None)
    state = init_state(cfg, m)
    scores = []
    for p in range(12):
        data = before if p < 6 else after
        order = sample_order(n, n, seed=5, start=p * n)
        state, _ = run_pass(state, data, cfg, order)
        scores.append(snr(data.Y, reconstruct(state, data)[0]))
    print(f"QV = {q:g} I:  before switch {scores[5]:6.2f} dB,  "
          f"one pass after {scores[6]:6.2f} dB,  end {scores[-1]:6.2f} dB")
