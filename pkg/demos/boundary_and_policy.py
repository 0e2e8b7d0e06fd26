"""Solve the investment boundary and print the feedback policy at a few wealth levels."""

import numpy as np

from healthinvest.boundary import covering_h_grid, solve_surface
from healthinvest.params import ModelParams
from healthinvest.primal import PrimalPoint, policy, primal_boundary


def main():
    params = ModelParams()
    hs = [2.0, 1000.0]
    surface = solve_surface(params, covering_h_grid(params, hs), 100, refine=0)
    print("wealth threshold b_hat(t, h)")
    print("    t " + "".join(f"{f'h={h:g}':>12}" for h in hs))
    for t in np.linspace(0.0, 19.0, 6):
        print(f"{t:5.1f} " + "".join(f"{primal_boundary(params, surface, t, h):12.2f}" for h in hs))

    h = 1000.0
    b_hat = primal_boundary(params, surface, 0.0, h)
    print(f"\npolicy at t=0, h={h:g} (b_hat={b_hat:.2f})")
    print(f"{'x':>10}{'c*':>10}{'pi*':>10}{'V':>12}  invest")
    for frac in (0.25, 0.5, 0.9, 1.1, 2.0):
        ev = policy(params, surface, PrimalPoint(0.0, frac * b_hat, h))
        print(f"{frac * b_hat:10.2f}{ev.c_star:10.3f}{ev.pi_star:10.2f}{ev.v:12.4f}  {ev.invest_now}")


if __name__ == "__main__":
    main()
