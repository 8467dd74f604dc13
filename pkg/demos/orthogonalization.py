"""Compare base, partially and completely orthogonalized solvers.

Runs each method on an ill-conditioned 60x60 system with count-sketch
directions and prints iterations to a 1e-8 relative residual (capped at
50000, so the slow methods report where they stopped).
"""
import numpy as np

from rpmsolve import SpectrumSpec, TerminationCriteria, gen_prescribed_svd, make_consistent_system, solve

n = 60
sigma = np.geomspace(1.0, 1e-2, n)
A = gen_prescribed_svd(n, n, SpectrumSpec(tuple(sigma), seed=3))
system = make_consistent_system(A, seed=4, name="svd60")
crit = TerminationCriteria(1e-8, max_iterations=50_000, check_every=10)

runs = [("base", 0), ("partial", 5), ("partial", 20), ("partial", 60), ("complete", 0)]
print(f"{'method':<14}{'iters':>10}{'advanced':>10}{'rel. residual':>16}{'error':>12}")
for method, m in runs:
    rep = solve(system, "countsketch:10", method, m=m, criteria=crit, seed=0)
    label = f"{method}({m})" if method == "partial" else method
    err = np.linalg.norm(rep.x - system.x_star)
    print(f"{label:<14}{rep.iterations:>10}{rep.advanced_steps:>10}"
          f"{rep.final_relative_residual:>16.2e}{err:>12.2e}")
