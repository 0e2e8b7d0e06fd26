"""Compare simulated welfare of the optimal rule with delayed and immediate investment."""

from healthinvest.boundary import covering_h_grid, solve_surface
from healthinvest.params import ModelParams
from healthinvest.primal import PrimalPoint, primal_boundary, value_primal
from healthinvest.simulate import PolicyKind, SimConfig, simulate_closed_loop, welfare_estimate


def main():
    params = ModelParams()
    h = 1000.0
    surface = solve_surface(params, covering_h_grid(params, [h]), 100, refine=0)
    x0 = 0.8 * primal_boundary(params, surface, 0.0, h)
    print(f"x0={x0:.2f}, h0={h:g}, V(0, x0, h0)={value_primal(params, surface, PrimalPoint(0.0, x0, h)):.4f}")
    rules = [("optimal", PolicyKind.OPTIMAL_BOUNDARY, 1.0), ("1.5 x threshold", PolicyKind.FIXED_THRESHOLD, 1.5),
             ("invest now", PolicyKind.INVEST_IMMEDIATELY, 1.0), ("never", PolicyKind.NEVER_INVEST, 1.0)]
    for label, kind, scale in rules:
        cfg = SimConfig(n_paths=4000, n_steps=400, seed=7, initial_wealth=x0, initial_health=h, policy=kind,
                        threshold_scale=scale, record_paths=0)
        est, se = welfare_estimate(params, simulate_closed_loop(params, surface, cfg))
        print(f"{label:>16}: {est:9.4f} +- {se:.4f}")


if __name__ == "__main__":
    main()
