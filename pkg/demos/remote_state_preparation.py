"""Multiplexed remote state preparation.

M client devices send weak coherent pulses to one server.  Spreading the
light over more devices lowers the multi-photon error for the same rate, so
the rate at a fixed fidelity grows with M and saturates.
"""
from qmux.qmux_rsp import DemandModel, gain_limit, rsp_gain, rsp_rate_at_fidelity

eta_c, eta_s, F = 1e-3, 0.9, 1 - 1e-6
print(f"rate per attempt at F >= {F}, eta_s = {eta_s}")
for M in (1, 2, 5, 20):
    pt = rsp_rate_at_fidelity(M, eta_c, eta_s, F)
    print(f"  M={M:<3} rate={pt.rate:.3e}  |alpha|^2={pt.params['alpha2']:.3e}")

print(f"\ngain by demand model (large-M limit {gain_limit(eta_s):.2f})")
for demand in DemandModel:
    gains = [rsp_gain(M, eta_c, eta_s, F, demand).gain for M in (2, 5, 50, 1000)]
    print(f"  {demand.value:<24} " + " ".join(f"{g:6.3f}" for g in gains))
