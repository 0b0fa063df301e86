"""Acceptance criteria 1-9; each prints one PASS/FAIL line."""
import time

import numpy as np
import pytest

from parafac.cli import run_cell, sweep_cells
from parafac.convops import (
    ConvSpec,
    apply,
    build_orthogonal,
    circulant_oracle,
    svcm_project,
    verify_orthogonality,
)
from parafac.errors import InvalidInputError
from parafac.lipnet import Chain, GroupSort, ResidualBlock, empirical_lipschitz
from parafac.multirate import interleave, parseval_check, polyphase_split, upsample
from parafac.ortho import SkewParams, column_ortho, exp_skew
from parafac.paraunitary import build_1d, init_reduced, random_factors
from parafac.polymat import (
    MatrixSeq,
    eval_z,
    freq_grid,
    is_paraunitary,
    paraconjugate,
    reg_residual_spatial,
    reg_residual_spectral,
    seq_mul,
)


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        assert ok, detail
    return emit


def test_criterion_1_machine_epsilon(verdict):
    start = time.perf_counter()
    spec = build_orthogonal("standard", 64, degrees=(1, 1), seed=2024)
    r32 = verify_orthogonality(spec, 256, trials=100, seed=0, dtype="f32")
    r64 = verify_orthogonality(spec, 256, trials=100, seed=0, dtype="f64")
    elapsed = time.perf_counter() - start
    eps32 = 2.0 ** -24
    # f32: at most 5e-7 and within one order of magnitude of the unit roundoff
    f32_ok = eps32 / 10 <= r32.ratio_dev_abs_mean <= 5e-7
    ok = f32_ok and r64.ratio_dev_abs_max <= 1e-12 and elapsed < 10
    verdict(1, ok,
            f"f32 mean|dev| {r32.ratio_dev_abs_mean:.3e} (signed {r32.ratio_dev_mean:+.2e} ± {r32.ratio_dev_std:.2e}), "
            f"f64 max|dev| {r64.ratio_dev_abs_max:.3e}, {elapsed:.2f}s")


def test_criterion_2_variant_grid(verdict):
    start = time.perf_counter()
    worst = 0.0
    infeasible = []
    for family, rate, groups in sweep_cells():
        cell = run_cell(family, rate, groups, 64, (1, 1), 256, 100, 0, "f64")
        if cell["feasible"]:
            worst = max(worst, cell["report"]["ratio_dev_abs_max"])
        else:
            infeasible.append((family, rate, groups, cell["violation"]))
    elapsed = time.perf_counter() - start
    na_ok = len(infeasible) == 1 and infeasible[0][:3] == ("strided_up", 4, 16) and "divide" in infeasible[0][3]
    ok = worst <= 1e-12 and na_ok and elapsed < 60
    verdict(2, ok, f"worst feasible max|dev| {worst:.3e}; rejected {infeasible}; {elapsed:.1f}s")


def _oracle_cases():
    degrees = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 1), (1, 2), (2, 2)]
    layouts = [("standard", c, 1, 1) for c in (1, 2, 3, 4)]
    layouts += [("standard", 4, 1, 2), ("standard", 4, 1, 4), ("dilated", 2, 2, 1), ("dilated", 4, 2, 2)]
    layouts += [("strided_down", 1, 2, 1), ("strided_down", 2, 2, 1), ("strided_down", 1, 4, 1),
                ("strided_down", 2, 2, 2)]
    layouts += [("strided_up", 2, 2, 1), ("strided_up", 4, 2, 1), ("strided_up", 4, 4, 1),
                ("strided_up", 4, 2, 2)]
    for layout in layouts:
        for deg in degrees:
            for init in ("uniform", "identity"):
                if init == "identity" and deg[0] != deg[1]:
                    continue
                yield layout, deg, init


def test_criterion_3_oracle(verdict):
    rng = np.random.default_rng(3)
    worst_gram = worst_apply = 0.0
    count = 0
    for (kind, ch, rate, groups), deg, init in _oracle_cases():
        spec = build_orthogonal(kind, ch, rate=rate, groups=groups, degrees=deg, init=init, seed=rng)
        for n in (8, 16):
            x = rng.standard_normal((n, ch))
            try:
                y = apply(spec, x)
            except InvalidInputError:
                continue  # support longer than the signal
            c, res = circulant_oracle(spec, n)
            worst_gram = max(worst_gram, res)
            worst_apply = max(worst_apply, float(np.max(np.abs(c @ x.ravel() - y.ravel()))))
            count += 1
    ok = worst_gram <= 1e-10 and worst_apply <= 1e-13 and count > 100
    verdict(3, ok, f"{count} operators, max|C^T C - I| {worst_gram:.3e}, max|Cx - conv(x)| {worst_apply:.3e}")


def test_criterion_4_factorization(verdict):
    rng = np.random.default_rng(4)
    worst_res = worst_tap = 0.0
    for _ in range(1000):
        c = int(rng.integers(1, 9))
        lo, hi = (int(v) for v in rng.integers(0, 4, size=2))
        h = build_1d(random_factors(c, lo, hi, rng))
        worst_res = max(worst_res, is_paraunitary(h)[1])
        prod = seq_mul(paraconjugate(h), h, )
        taps = prod.padded(max(prod.lo, 0), max(prod.hi, 0)).copy()
        taps[max(prod.lo, 0)] -= np.eye(c)
        worst_tap = max(worst_tap, float(np.max(np.abs(taps))))
    ok = worst_res <= 1e-12 and worst_tap <= 1e-12
    verdict(4, ok, f"1000 systems, max residual {worst_res:.3e}, max |h~*h - delta I| {worst_tap:.3e}")


def test_criterion_5_init_reduction(verdict):
    rng = np.random.default_rng(5)
    worst_off = worst_center = 0.0
    for _ in range(200):
        c = int(rng.integers(2, 9))
        degree = int(rng.integers(1, 4))
        q = exp_skew(SkewParams.random(c, rng))
        pos = [column_ortho(SkewParams.random(c, rng), int(rng.integers(1, c + 1))) for _ in range(degree)]
        h = build_1d(init_reduced(q, pos))
        taps = h.padded(max(h.lo, 0), max(h.hi, 0))
        center = max(h.lo, 0)
        worst_center = max(worst_center, float(np.max(np.abs(taps[center] - q))))
        off = np.delete(taps, center, axis=0)
        if off.size:
            worst_off = max(worst_off, float(np.max(np.abs(off))))
    ok = worst_off <= 1e-14 and worst_center <= 1e-14
    verdict(5, ok, f"200 draws, max off-center {worst_off:.3e}, max |center - Q| {worst_center:.3e}")


def test_criterion_6_multirate(verdict):
    rng = np.random.default_rng(6)
    worst = {"upsample": 0.0, "reconstruction": 0.0, "parseval": 0.0}
    for case in range(200):
        rate = 1 + case % 4
        t, s = (int(v) for v in rng.integers(1, 4, size=2))
        lo, hi = (int(v) for v in rng.integers(0, 6, size=2))
        x = MatrixSeq.from_taps(rng.standard_normal((lo + hi + 1, t, s)), start=-lo, trim=None)
        z = np.exp(1j * rng.uniform(-np.pi, np.pi))
        ref_up = eval_z(x, z ** rate)
        got_up = eval_z(upsample(x, rate), z)
        worst["upsample"] = max(worst["upsample"], float(np.max(np.abs(got_up - ref_up)) / np.max(np.abs(ref_up))))
        comps = polyphase_split(x, rate)
        recon = sum(z ** (-r) * eval_z(cmp, z ** rate) for r, cmp in enumerate(comps))
        ref = eval_z(x, z)
        back = interleave(comps).padded(x.lo, x.hi)
        rel = max(float(np.max(np.abs(recon - ref)) / np.max(np.abs(ref))),
                  float(np.max(np.abs(back - x.taps)) / np.max(np.abs(x.taps))))
        worst["reconstruction"] = max(worst["reconstruction"], rel)
        spatial, spectral = parseval_check(x, rate)
        worst["parseval"] = max(worst["parseval"], abs(spatial - spectral) / spatial)
    ok = all(v <= 1e-12 for v in worst.values())
    verdict(6, ok, "200 cases, max relative errors " + ", ".join(f"{k} {v:.2e}" for k, v in worst.items()))


def test_criterion_7_regularization(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    for case in range(100):
        rate = (1, 2, 4)[case % 3]
        t, s = (int(v) for v in rng.integers(1, 5, size=2))
        lo, hi = (int(v) for v in rng.integers(0, 5, size=2))
        h = MatrixSeq.from_taps(rng.standard_normal((lo + hi + 1, t, s)), start=-lo, trim=None)
        for transposed in (False, True):
            a = reg_residual_spatial(h, rate, transposed)
            b = reg_residual_spectral(h, rate, transposed=transposed)
            worst = max(worst, abs(a - b) / max(a, b))
    verdict(7, worst <= 1e-10, f"100 filters x 2 forms, max relative disagreement {worst:.3e}")


def test_criterion_8_svcm(verdict):
    rng = np.random.default_rng(8)
    n_freq = 16
    worst_unmasked = 0.0
    masked_devs = []
    for _ in range(5):
        raw = MatrixSeq.from_taps(rng.standard_normal((3, 16, 16)) / np.sqrt(48), start=-1, trim=None)
        clipped = svcm_project(raw, n_freq)
        grid = freq_grid(clipped, n_freq)
        gram = np.conj(np.swapaxes(grid, 1, 2)) @ grid
        worst_unmasked = max(worst_unmasked, float(np.max(np.abs(gram - np.eye(16)))))
        masked = ConvSpec("standard", (svcm_project(raw, n_freq, mask_to_support=True),),
                          construction="svcm_masked")
        rep = verify_orthogonality(masked, n_freq, trials=100, seed=rng)
        masked_devs.append(rep.ratio_dev_mean)
    ok = worst_unmasked <= 1e-12 and min(abs(d) for d in masked_devs) > 1e-2
    verdict(8, ok, f"unmasked residual {worst_unmasked:.3e}; masked mean deviations "
                   + ", ".join(f"{d:+.3f}" for d in masked_devs))


def test_criterion_9_lipschitz_chain(verdict):
    rng = np.random.default_rng(9)
    blocks = []
    for _ in range(10):
        a = build_orthogonal("standard", 8, degrees=(1, 1), seed=rng)
        b = build_orthogonal("standard", 8, degrees=(1, 2), seed=rng)
        blocks.append(ResidualBlock("additive", (Chain([a, GroupSort(2)]), Chain([b])),
                                    alpha=float(rng.uniform())))
        blocks.append(GroupSort(4))
    chain = Chain(blocks)
    ratio = empirical_lipschitz(chain, 1000, seed=rng, shape=(32, 8))
    verdict(9, ratio <= 1 + 1e-9, f"10 blocks, 1000 pairs, max ratio {ratio:.15f}")
