"""Pointwise intervals for an unknown link, two ways.

Fits the weighted kernel ridge regressor on one arm's projected data from
a bandit trajectory and tabulates, on a grid of index values, the
studentized CLT interval (method KSIEGE) against the conservative
uniform-band interval (method AS) driven by the realized exploration
coefficient.
"""

import numpy as np

from ksib import as_band_ci, pointwise_ci
from ksib.harness import Scenario, inference_snapshot, run_trajectory

scenario = Scenario(d=2, sigma=0.05, seed=3)
log, means, ledger, env = run_trajectory(scenario, rep=1)
arm, t = 0, 999
snap = inference_snapshot(log, t, arm, scenario)
model, cov = snap.model, snap.covariance

print(f"arm {arm} at t={t}: support size {model.n_support}, "
      f"bandwidth {model.kernel.bandwidth:.3f}, "
      f"exploration coefficient r~ = {snap.r_tilde:.4f}")
print(f"\n{'u':>6} {'truth':>7} {'fit':>7} "
      f"{'CLT interval':>19} {'band interval':>19}")
for u in np.linspace(-2.0, 2.0, 9):
    truth = env.links[arm](u)
    clt = pointwise_ci(model, cov, float(u), alpha=0.05,
                       t=model.n_support, gamma=scenario.gamma)
    band = as_band_ci(model, float(u), eta=0.05, r_tilde=snap.r_tilde,
                      c_const=0.05, theta=scenario.as_theta)
    print(f"{u:6.2f} {truth:7.3f} {clt.center:7.3f} "
          f"[{clt.lo:8.3f}, {clt.hi:8.3f}] [{band.lo:8.3f}, {band.hi:8.3f}]")

print("\nThe band interval's absolute scale is set by its constant; at the")
print("unit default it is wider than the CLT interval by orders of")
print("magnitude, which is why the harness also reports a coverage-")
print("calibrated constant (see ksib.harness.calibrated_band_ratio).")
