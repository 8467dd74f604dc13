"""Track stopping times and per-epoch contraction bounds for Kaczmarz.

Each epoch ends once the visited rows span the row space. The script checks
that the error contracts at least as fast as the Gram-determinant bound
computed from the rows in that epoch.
"""
import numpy as np

from rpmsolve import (TerminationCriteria, epoch_rate_check, make_consistent_system, row_space,
                      solve, stopping_times)
from rpmsolve.system import rng_from_seed

A = rng_from_seed(0).standard_normal((8, 8))
system = make_consistent_system(A, seed=1)
rep = solve(system, "cyclic", criteria=TerminationCriteria(max_iterations=80), seed=2,
            record_trace=True)

log = stopping_times(A, rep.trace.sketches, row_space(A))
errors = [np.linalg.norm(x - system.x_star) for x in rep.trace.iterates]
check = epoch_rate_check(log, errors)

print(f"stopping times: {log.taus}")
print(f"{'epoch':>5}{'gap':>5}{'1 - gamma':>12}{'observed':>11}")
for i, (gap, g) in enumerate(zip(log.gaps, log.gammas)):
    start = 0 if i == 0 else log.taus[i - 1] + 1
    ratio = (errors[log.taus[i] + 1] / errors[start]) ** 2
    print(f"{i:>5}{gap:>5}{1 - g:>12.2e}{ratio:>11.2e}")
print("rate bound held in every epoch:", bool(check))
