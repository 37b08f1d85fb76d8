"""Several servers preparing qubits for one client.

A hub of M servers must deliver s qubits to a client.  The Monte Carlo
sampler plays out rounds of server-client and server-server attempts under
storage cutoffs; closed forms exist for s = 2.  The optimizer searches pulse
brightness and idle cutoff for the best rate whose worst-case fidelity meets
the floor.
"""
from qmux.multiserver import (
    HubConfig,
    HubGrid,
    SamplerConfig,
    analytic_rate_s2,
    load_preset,
    multiserver_gain,
    run_sampler,
)

hub = HubConfig(M=2, s=2, P_sc=1e-3, P_ss=0.3, n_e=1000, n_o=100)
res = run_sampler(SamplerConfig(hub, N=100_000, seed=1, F_min=0.0), threads=4)
print("sampled vs closed-form rate per attempt, M=2, s=2")
print(f"  sampled  {res.rate:.4e} +- {res.stderr_rate:.1e}")
print(f"  analytic {analytic_rate_s2(hub, 'multiplex'):.4e}")

preset = load_preset("standard_hub")
grid = HubGrid(alpha2=(0.1, 0.3, 0.5), n_o=(100, 1000, 10_000, 100_000))
print(f"\noptimized gain over one server at F >= {preset.F_min}")
for M, s in ((2, 2), (3, 2), (3, 3)):
    g = multiserver_gain(M, s, preset.F_min, grid, 50_000, 7, preset, threads=4)
    print(f"  M={M} s={s}: gain {g.gain:.2f}  (M^s = {M**s})")
