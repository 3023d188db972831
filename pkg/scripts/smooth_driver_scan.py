"""Area defect of a smooth driver against the mass, with the m-scaling exposed.

For a C^1 driver z is close to m M^{-1} gamma', so the area defect of M x
against gamma is first order in m. The last column should settle to a
constant.
"""

import argparse

import numpy as np

from roughmag import homogenize as hz


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kmax", type=int, default=12)
    ap.add_argument("--steps", type=int, default=2**16)
    ap.add_argument("--driver", default="sinusoid", choices=sorted(hz.DRIVERS))
    args = ap.parse_args()
    M = np.array([[1.0, 1.0], [-1.0, 1.0]])
    masses = [2.0**-k for k in range(2, args.kmax + 1)]
    rep = hz.smooth_driver_experiment(M, masses, hz.DRIVERS[args.driver](), n_steps=args.steps)
    _, d, _ = rep.series("area_defect")
    _, z, _ = rep.series("sup_z")
    print(f"area scale {rep.details['area_scale']:.3f}")
    print("       m      defect     sup|z|   defect/m")
    for m, a, b in zip(masses, d, z):
        print(f"{m:9.2e}  {a:9.4f}  {b:9.4f}  {a / m:9.2f}")
    for label in ("literal", "balanced"):
        r = np.round(rep.details[f"bound_ratio_{label}"], 3).tolist()
        print(f"sup|z| / bound ({label} delta): {r}")
    print("criteria:", rep.criteria)


if __name__ == "__main__":
    main()
