"""Search random 12-mers for a secondary-structure space of a given size.

The benchmark 12-mer is calibrated to 70 structures with a unique
minimum-energy structure; this reproduces that search.

    python scripts/find_rna_instance.py --states 70 --tries 20000
"""
import argparse

from tips import rng as rngmod
from tips.rna import RnaModel, RnaModelParams, full_state_space, minimum_energy_structures, to_dot_bracket


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--length", type=int, default=12)
    ap.add_argument("--states", type=int, default=70)
    ap.add_argument("--hairpin-min", type=int, nargs="+", default=[3, 4])
    ap.add_argument("--tries", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--show", type=int, default=10)
    args = ap.parse_args()

    g = rngmod.stream(args.seed)
    found = 0
    for _ in range(args.tries):
        seq = "".join("ACGU"[i] for i in g.integers(4, size=args.length))
        for h in args.hairpin_min:
            model = RnaModel(seq, RnaModelParams(hairpin_min=h))
            if len(full_state_space(model)) != args.states:
                continue
            best = minimum_energy_structures(model)
            if len(best) != 1:
                continue
            print(f"{seq}  hairpin_min={h}  mfe {to_dot_bracket(best[0], args.length)}")
            found += 1
            break
        if found >= args.show:
            break
    if not found:
        print(f"no {args.length}-mer with {args.states} structures in {args.tries} tries")


if __name__ == "__main__":
    main()
