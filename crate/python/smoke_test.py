"""Smoke test for the lora_stbc extension module.

Build and install the module first, e.g.

    pip install maturin
    maturin develop --release -m crates/python/Cargo.toml

then run ``python python/smoke_test.py``.
"""

import math

import lora_stbc as ls


def check_modem():
    modem = ls.Modem(7)
    assert modem.chips_per_symbol == 128
    chips = modem.modulate(42)
    assert len(chips) == 128
    assert all(abs(abs(c) - math.sqrt(1 / 128)) < 1e-12 for c in chips)
    symbol, metrics = modem.demodulate(chips)
    assert symbol == 42
    assert abs(metrics[42] - 1.0) < 1e-9
    assert max(m for i, m in enumerate(metrics) if i != 42) < 1e-9
    try:
        ls.Modem(6)
    except ValueError:
        pass
    else:
        raise AssertionError("SF 6 accepted")


def check_codes():
    g2 = ls.StbcCode("G2")
    assert (g2.slots, g2.antennas, g2.symbols_per_block, g2.u_cons) == (2, 2, 2, 1)
    assert g2.layout() == [["x1", "x2"], ["-x2*", "x1*"]]
    g4 = ls.StbcCode("G4")
    assert (g4.slots, g4.antennas, g4.rate, g4.u_cons) == (8, 4, 0.5, 2)


def check_analytic():
    p = ls.SystemParams.for_code("G2", 1, 7, 10 ** (-4 / 10))
    assert (p.m, p.n, p.j, p.rate) == (2, 1, 2, 1.0)
    perfect = ls.ber_perfect(p)
    assert 1e-3 < perfect < 1e-1
    assert 1.0 < ls.ber_imperfect(p) / perfect < 1.15
    oracle = ls.oracle_ber_numeric(p)
    assert abs(perfect / oracle - 1) < 0.15
    hi = ls.SystemParams(9, 2, 1, 2, 1.0, 0.0, 10.0)
    assert abs(ls.ber_asymptotic_perfect(hi) - (256 / 511) * (2 / 2048) * 0.01 * 3) < 1e-15
    f7 = ls.SystemParams.for_code("G4", 1, 7, 1.0, ceem="fixed", sigma_e_sq=0.05)
    f12 = ls.SystemParams.for_code("G4", 1, 12, 1.0, ceem="fixed", sigma_e_sq=0.05)
    assert abs(ls.error_floor(f7) - ls.error_floor(f12)) < 1e-15
    nodes, weights = ls.gauss_hermite(30)
    assert abs(sum(weights) - math.sqrt(math.pi)) < 1e-10
    assert abs(ls.q_function(0.0) - 0.5) < 1e-15


def check_simulation():
    curve = ls.simulate(7, "G2", 1, [-6.0, 0.0], min_bit_errors=100, max_blocks=20000, seed=1)
    assert [e.snr_db for e in curve] == [-6.0, 0.0]
    assert curve[0].bit_errors >= 100
    assert curve[1].ber < curve[0].ber
    again = ls.simulate(7, "G2", 1, [-6.0, 0.0], min_bit_errors=100, max_blocks=20000, seed=1, workers=2)
    assert [e.bit_errors for e in again] == [e.bit_errors for e in curve]
    slope = ls.diversity_slope([(10.0, 1e-3), (20.0, 1e-5)])
    assert abs(slope - 2.0) < 1e-12


if __name__ == "__main__":
    check_modem()
    check_codes()
    check_analytic()
    check_simulation()
    print("lora_stbc smoke test passed")
