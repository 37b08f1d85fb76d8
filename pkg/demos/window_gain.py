"""How much does spreading attempts over M memories help an s-qubit request?

Each attempt succeeds with probability p, and a round is usable once s
successes fall inside a window of w attempts (older qubits have decohered).
Multiplexing over M memories widens the effective window to M w, which the
exact window solver turns into a gain.
"""
import numpy as np

from qmux.scanstats import WindowSpec, expected_attempts_exact, temporal_gain_s, window_gain_limit

w, s = 4, 2
print(f"expected attempts until {s} successes fit in a window of {w}")
for p in (0.5, 0.1, 0.01):
    print(f"  p={p:<5} E={expected_attempts_exact(WindowSpec(w, s, p)).expected_attempts:12.1f}")

print("\ngain of M memories over one, and its p -> 0 limit")
print("   p       M=2     M=3     M=4")
for p in np.geomspace(1e-3, 0.5, 6):
    gains = [temporal_gain_s(p, w, M, s).gain for M in (2, 3, 4)]
    print(f"  {p:7.4f} " + " ".join(f"{g:7.3f}" for g in gains))
print("  limit   " + " ".join(f"{window_gain_limit(w, M, s):7.3f}" for M in (2, 3, 4)))
print("\nthe gain exceeds M at low p and falls to M as p -> 1")
