"""Goal-oriented adaptivity on the unit square.

Primal and dual problem have their data on different triangles of the
initial mesh, so a refinement that only looks at one of them wastes
elements.  The four strategies below all mark for both; the product of
the estimators decays like ``(#T)^(-p)``, and the goal error stays below
the product of the two energy errors.
"""
import numpy as np

from goafem import RunConfig, adaptive_steps, builtin_problem, reference_values

_, problem = builtin_problem("goal_square")

for strategy in ("goafem_maximum", "ms", "fpz", "bet"):
    config = RunConfig(problem="goal_square", p=1, strategy=strategy, theta=0.5,
                       c_min=1.0, max_dofs=10**9, max_elements=3000)
    steps = [(s.record, s.mesh) for s in adaptive_steps(config, problem)]
    aa, zz, g_ref = reference_values(problem, steps[-1][1], 1, refinements=2)
    print(f"\n{strategy}")
    print(f"{'iter':>4} {'#T':>6} {'eta*eta_star':>13} {'|G err|':>10} {'bound':>10}")
    shown = sorted(set(range(0, len(steps), 3)) | {len(steps) - 1})
    for rec, _ in (steps[i] for i in shown):
        bound = np.sqrt(max(aa - rec.energy_uu, 0) * max(zz - rec.energy_dual, 0))
        print(f"{rec.iter:4d} {rec.ntri:6d} {np.sqrt(rec.eta2 * rec.eta_star2):13.3e}"
              f" {abs(g_ref - rec.goal):10.3e} {bound:10.3e}")
