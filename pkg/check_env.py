import os
from dotenv import load_dotenv
import cvxpy as cp

from helpers.conic_solver import backend_map


def check_environment() -> bool:
    # Load environment variables
    load_dotenv('config.env')

    config_vars = [
        "AQ_SOLVER",
        "AQ_GAP_TOL",
        "AQ_FEAS_TOL",
        "AQ_MAX_ITERS",
        "AQ_GRID_RESOLUTION",
        "AQ_SEED",
        "AQ_MAX_CLIQUE",
        "AQ_MAX_WORKERS",
        "AQ_OUTPUT_DIR"
    ]

    print("\n=== Environment Variables Check ===")
    for var in config_vars:
        value = os.getenv(var)
        if value:
            print(f"✅ {var}: {value}")
        else:
            print(f"➖ {var}: Not Set (default used)")

    print("\n=== Conic Solver Check ===")
    installed = set(cp.installed_solvers())
    for name in backend_map:
        status = "✅" if name in installed else "❌"
        print(f"{status} {name}")

    selected = os.getenv("AQ_SOLVER", "CLARABEL").upper()
    if selected not in installed:
        print(f"\n❌ Selected solver {selected} is not installed")
        return False
    print(f"\n✅ Selected solver {selected} is available")
    return True


if __name__ == "__main__":
    check_environment()
