"""Linear Scordelis-Lo roof: monitored deflection against the face order.

Usage: python demos/roof_linear.py [max_order]
"""

import sys
import time

from prismshell.benchmarks import get_benchmark
from prismshell.model import ShellModel
from prismshell.solver import solve_linear_problem


def main(max_order=6):
    prob = get_benchmark("SLR")
    mon = prob.monitors[prob.primary_monitor]
    print(f"{'p':>2} {'dofs':>7} {'u_A':>9} {'time':>6}")
    for p in range(1, max_order + 1):
        t0 = time.perf_counter()
        model = ShellModel(prob.mesh, prob.material, p, 2, 2, bcs=prob.bcs)
        U, _ = solve_linear_problem(model, prob.loads)
        uA = model.node_displacement(U, mon.node) @ mon.direction
        print(f"{p:2d} {model.n_dofs:7d} {uA:9.5f} {time.perf_counter() - t0:5.1f}s")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 6)
