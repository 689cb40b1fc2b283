"""
Vanishing viscosity: bounds that survive ε -> 0
===============================================

The viscous regularisation ε enters the model twice: as a viscous term in
the chemical potential and as a quartic strain energy. Halving ε repeatedly
on the tension bar, we print the ε-uniform a-priori quantities next to the
regularising energy ε∫|∇u|⁴, which should fall with ε.

Runs in the sweep are independent, so they are spread over worker
processes. The results do not depend on the worker count.
"""

from cldamage.evolution import APRIORI_EPS, viscosity_sweep

from tension_bar import config


def main(workers=2):
    eps = [1.0, 0.5, 0.25, 0.125, 0.0625]
    rep = viscosity_sweep(config(steps=32), eps, workers=workers)
    print("      eps " + " ".join(f"{k:>12s}" for k in APRIORI_EPS) + "   eps*|grad u|^4")
    for e, reg in zip(rep.eps, rep.eps_grad_u4):
        vals = rep.quantities[e]
        print(f"{e:9.4f} " + " ".join(f"{vals[k]:12.4e}" for k in APRIORI_EPS) + f"   {reg:.4e}")
    print("bounded:", rep.all_bounded, " regulariser decreasing:", rep.reg_decreasing)


if __name__ == "__main__":
    main()
