"""Run the shipped configurations and print their outer-loop tables.

Usage: python3 demos/run_demos.py [output_root]
"""

import dataclasses
import sys
from pathlib import Path

from hyxc import load_config, run_outer_loop

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main(root: Path) -> None:
    for path in sorted(CONFIGS.glob("*.cfg")):
        cfg = load_config(path)
        out = root / path.stem
        cfg = dataclasses.replace(cfg, output=dataclasses.replace(cfg.output, directory=str(out)))
        report = run_outer_loop(cfg)
        print(f"\n{path.name}  (N={cfg.system.n_electrons}, M={cfg.basis.size}, {cfg.system.points} points)")
        print(f"{'iter':>4} {'E (VQE)':>15} {'E (FCI)':>15} {'E_xc':>13} {'max|drho|':>10} {'||drho||':>10}")
        for r in report.records:
            print(f"{r.outer_iter:>4} {r.many_body_energy:>15.10f} {r.fci_energy:>15.10f} {r.e_xc:>13.8f} "
                  f"{r.max_abs_delta_rho:>10.3e} {r.delta_rho_norm:>10.3e}")
        print(f"status: {report.status}; dumps in {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs"))
