"""The per-batch search for the unit-norm regularization strength.

The projection-weight norm decreases monotonically in lambda; the solver
finds the lambda where it crosses 1, restarting from several seeds plus
the median of previous batches.
"""

import numpy as np

from regbn import LambdaHistory, LambdaObjective, objective_norm, solve_lambda, thin_svd

rng = np.random.default_rng(1)

f = rng.standard_normal((40, 12)) * 3.0
g = rng.standard_normal((40, 5))
obj = LambdaObjective.from_factors(thin_svd(g), f)

print("norm profile |W(lambda)|_F:")
for lam in (1e-4, 1e-2, 1.0, 1e2, 1e4):
    print(f"  lambda {lam:>8.4g}  ->  {objective_norm(obj, lam):8.4f}")

history = LambdaHistory()
sol = solve_lambda(obj, history)
print(f"\nsolved lambda     = {sol.lambda_hat:.6g}")
print(f"norm at solution  = {objective_norm(obj, sol.lambda_hat):.8f}")
print(f"per-seed losses   = {[f'{l:.2e}' for l in sol.seed_losses]}")

# Across batches the history's median becomes an extra restart point,
# warm-starting the search near where recent batches landed.
for step in range(5):
    f = rng.standard_normal((40, 12)) * 3.0
    g = rng.standard_normal((40, 5))
    obj = LambdaObjective.from_factors(thin_svd(g), f)
    sol = solve_lambda(obj, history)
    history.append(sol.lambda_hat)
    print(f"batch {step}: lambda = {sol.lambda_hat:9.4f}   "
          f"restarts = {[round(s, 3) for s in history.restart_points()]}")
