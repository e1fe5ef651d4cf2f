"""Generate extended-precision reference tables for the special-function layer.

Run from the repository root:

    python3 tests/oracles/gen_bessel_tables.py

Writes ``tests/oracles/bessel_tables.json``.  The tables are computed with
mpmath at 50 significant digits and rounded to double precision, so every
stored value is correct to the last bit of a float64.  The main build never
imports mpmath; the JSON file is the frozen oracle the unit tests compare
against.

Contents
--------
``k01_grid``
    100 moduli log-spaced on [1e-6, 30], at phases 0 and pi/4, with K0 and K1.
``k1reg_grid``
    z**-1 K1(z) - z**-2 (computed exactly in high precision, where the naive
    double-precision subtraction would lose digits), on a grid that straddles
    the series/direct switch radius 2.0, plus a dense small-|z| set.
``epair_grid``
    e1 = K0 + k1reg and e2 = -K0 - 2*k1reg at scattered points.
``spot_values``
    A few named constants quoted in docstrings/tests (K0(1), K1(1),
    k1reg(1), the z=2 Wronskian, and the small-z constant of e1).
"""

import json
import os

import mpmath as mp

mp.mp.dps = 50

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "bessel_tables.json")


def _c(z):
    """mpmath complex from a (re, im) pair or mpc."""
    return mp.mpc(z)


def k0(z):
    return mp.besselk(0, _c(z))


def k1(z):
    return mp.besselk(1, _c(z))


def k1reg(z):
    z = _c(z)
    return k1(z) / z - 1 / (z * z)


def epair(z):
    r = k1reg(z)
    e1 = k0(z) + r
    e2 = -k0(z) - 2 * r
    return e1, e2


def cplx(w):
    """Round an mpmath complex to a JSON-friendly [re, im] float pair."""
    return [float(mp.re(w)), float(mp.im(w))]


def main():
    phases = {"0": mp.mpf(0), "pi/4": mp.pi / 4}

    k01_grid = []
    n = 100
    for i in range(n):
        # log-spaced moduli on [1e-6, 30]
        t = mp.mpf(i) / (n - 1)
        r = mp.mpf("1e-6") * (mp.mpf(30) / mp.mpf("1e-6")) ** t
        for label, ph in phases.items():
            z = r * mp.exp(1j * ph)
            k01_grid.append(
                {
                    "z": cplx(z),
                    "phase": label,
                    "k0": cplx(k0(z)),
                    "k1": cplx(k1(z)),
                }
            )

    # straddle the switch radius, plus small moduli where cancellation is worst
    k1reg_moduli = (
        [mp.mpf(m) / 100 for m in (1, 3, 10, 30)]
        + [mp.mpf(m) / 10 for m in (1, 3, 5, 8, 12, 16, 19)]
        + [mp.mpf("1.9"), mp.mpf("1.95"), mp.mpf("1.999"), mp.mpf(2),
           mp.mpf("2.001"), mp.mpf("2.05"), mp.mpf("2.1")]
        + [mp.mpf(m) for m in (3, 5, 8, 12, 20, 30)]
    )
    k1reg_grid = []
    for r in k1reg_moduli:
        for label, ph in phases.items():
            z = r * mp.exp(1j * ph)
            k1reg_grid.append({"z": cplx(z), "phase": label, "k1reg": cplx(k1reg(z))})

    epair_pts = [
        mp.mpc("0.001"), mp.mpc("0.05"), mp.mpc("0.7"), mp.mpc("2.5"),
        mp.mpc("9.0"), mp.mpc("0.02", "0.02"), mp.mpc("1.1", "1.1"),
        mp.mpc("4.0", "4.0"), mp.mpc("12.0", "12.0"),
    ]
    epair_grid = []
    for z in epair_pts:
        e1, e2 = epair(z)
        epair_grid.append({"z": cplx(z), "e1": cplx(e1), "e2": cplx(e2)})

    # e1(z) = -(1/2) ln z + c_e1 + O(z^2 ln z); c_e1 = ln(2)/2 - gamma/2 - 1/4
    c_e1 = mp.log(2) / 2 - mp.euler / 2 - mp.mpf(1) / 4
    spot = {
        "k0_at_1": cplx(k0(1)),
        "k1_at_1": cplx(k1(1)),
        "k1reg_at_1": cplx(k1reg(1)),
        # K0(z) I1(z) + K1(z) I0(z) = 1/z, checked at z = 2
        "wronskian_at_2": cplx(
            k0(2) * mp.besseli(1, 2) + k1(2) * mp.besseli(0, 2)
        ),
        "e1_smallz_const": cplx(c_e1),
        "e2_smallz_limit": [0.5, 0.0],
    }

    tables = {
        "dps": 50,
        "k01_grid": k01_grid,
        "k1reg_grid": k1reg_grid,
        "epair_grid": epair_grid,
        "spot_values": spot,
    }
    with open(OUT, "w") as fh:
        json.dump(tables, fh, indent=1)
    print("wrote", OUT)
    print("K0(1)      =", mp.nstr(k0(1), 20))
    print("K1(1)      =", mp.nstr(k1(1), 20))
    print("k1reg(1)   =", mp.nstr(k1reg(1), 20))
    print("W(2)-0.5   =", mp.nstr(spot["wronskian_at_2"][0] - 0.5, 5))
    print("c_e1       =", mp.nstr(c_e1, 20))


if __name__ == "__main__":
    main()
