"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Run with `pytest tests/test_acceptance.py -v -s`.

The end-to-end detection criterion (8) trains nine models and dominates the
runtime; everything else completes in seconds.
"""

import math
import statistics
import time

import numpy as np
import pytest

from entrogru import cells
from entrogru.cost import CellConfig, count_macs, count_params
from entrogru.detect.ablation import run_ablation
from entrogru.detect.evaluate import degraded_frame_recall
from entrogru.detect.train import TrainConfig, train_and_eval
from entrogru.entropy import histogram, ie_map, unary_entropy
from entrogru.gradcheck import run_standard_checks
from entrogru.tensor import Tensor

from reference import ie_map_reference, morphological_open_reference

BENCH_SEEDS = (1, 2, 3)


def _report(num, ok, detail=""):
    print(f"\n[criterion {num}] {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {num} failed: {detail}"


def test_c01_dense_parameter_reproduction():
    lstm = count_params(CellConfig("lstm", 1024, 1024)).total_params
    gru = count_params(CellConfig("gru", 1024, 1024)).total_params
    rel_lstm = abs(lstm - 8.41e6) / 8.41e6
    rel_gru = abs(gru - 6.33e6) / 6.33e6
    _report(1, rel_lstm < 0.01 and rel_gru < 0.01,
            f"lstm={lstm} ({rel_lstm:.4%} off 8.41M), gru={gru} ({rel_gru:.4%} off 6.33M)")


def test_c02_squeezed_compression_property():
    squeezed = count_params(CellConfig("squeezed_gru", 1024, 256, 3)).total_params
    dense_gru = count_params(CellConfig("gru", 1024, 1024)).total_params
    conv_gru = count_params(CellConfig("conv_gru", 1024, 1024, 3)).total_params
    r_dense = squeezed / dense_gru
    r_conv = squeezed / conv_gru
    _report(2, r_dense <= 0.20 and r_conv <= 0.05,
            f"squeezed={squeezed}; vs dense GRU {r_dense:.4f} (<=0.20), "
            f"vs convGRU {r_conv:.4f} (<=0.05)")


def test_c03_macs_ordering():
    sq = count_macs(CellConfig("squeezed_gru", 1024, 256, 3), (10, 10)).total_macs
    cg = count_macs(CellConfig("conv_gru", 1024, 256, 3), (10, 10)).total_macs
    ratio = sq / cg
    _report(3, sq < cg and ratio <= 0.25,
            f"squeezed={sq}, convGRU={cg}, ratio={ratio:.4f} (<=0.25)")


def test_c04_entropy_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    exact = True
    for _ in range(100):
        img = rng.integers(0, 256, size=(8, 8))
        if not np.array_equal(ie_map(img, opening=False),
                              ie_map_reference(img, opening=False)):
            exact = False
            break
        plain = ie_map(img, opening=False)
        if not np.array_equal(ie_map(img, opening=True),
                              morphological_open_reference(plain)):
            exact = False
            break
    elapsed = time.time() - t0
    _report(4, exact and elapsed < 10.0,
            f"100 images bit-exact={exact} in {elapsed:.2f}s (<10s)")


def test_c05_entropy_bounds_and_degenerates():
    const_zero = not ie_map(np.full((9, 9), 55)).any()
    rng = np.random.default_rng(5)
    bound = math.log2(9) + 1e-12
    in_bounds = all(
        0.0 <= m.min() and m.max() <= bound
        for m in (ie_map(rng.integers(0, 256, size=(10, 10))) for _ in range(20)))
    uniform_8 = unary_entropy(np.full(256, 1 / 256)) == 8.0
    _report(5, const_zero and in_bounds and uniform_8,
            f"constant->zero={const_zero}, bounds<=log2(9)={in_bounds}, "
            f"uniform-256 entropy 8.0={uniform_8}")


def test_c06_gradient_verification():
    t0 = time.time()
    reports = run_standard_checks(tolerance=1e-5, seed=42)
    elapsed = time.time() - t0
    failed = [str(r) for r in reports if not r.passed]
    per_op = {}
    for r in reports:
        per_op.setdefault(r.op_name.split("[")[0], []).append(r)
    enough_shapes = all(len(v) >= 3 for v in per_op.values())
    _report(6, not failed and enough_shapes and elapsed < 60.0,
            f"{len(reports)} checks over {len(per_op)} ops in {elapsed:.1f}s "
            f"(<60s); failures={failed}")


def test_c07_structural_equivalences():
    rng = np.random.default_rng(77)
    # convGRU with 1x1 kernels == dense GRU applied per pixel (<=1e-6)
    nin, nh = 3, 4
    dense = cells.init_dense_gru(rng, nin, nh, dtype=np.float64)
    for t in dense.params():
        t.data = rng.standard_normal(t.data.shape)
    conv = cells.ConvGruWeights(
        nin, nh, 1,
        kz=Tensor(dense.wz.data.T.reshape(nh, nin + nh, 1, 1)),
        bz=Tensor(dense.bz.data),
        kr=Tensor(dense.wr.data.T.reshape(nh, nin + nh, 1, 1)),
        br=Tensor(dense.br.data),
        kh=Tensor(dense.wh.data.T.reshape(nh, nin + nh, 1, 1)),
        bh=Tensor(dense.bh.data))
    x = rng.standard_normal((1, nin, 4, 4)).astype(np.float32)
    h = rng.standard_normal((1, nh, 4, 4)).astype(np.float32)
    got = cells.conv_gru_step(Tensor(x), Tensor(h), conv).data
    max_diff = 0.0
    for y in range(4):
        for x_ in range(4):
            want = cells.dense_gru_step(Tensor(x[:, :, y, x_]),
                                        Tensor(h[:, :, y, x_]), dense).data
            max_diff = max(max_diff, float(np.abs(got[0, :, y, x_] - want[0]).max()))
    pixelwise_ok = max_diff <= 1e-6

    # zero-weight step halves the hidden state exactly
    wz = cells.init_squeezed_gru(rng, 4, 3)
    for t in wz.params():
        t.data = np.zeros_like(t.data)
    h0 = Tensor(rng.standard_normal((1, 3, 5, 5)).astype(np.float32))
    x0 = Tensor(rng.standard_normal((1, 4, 5, 5)).astype(np.float32))
    halved = cells.squeezed_gru_step(x0, h0, wz).data
    zero_ok = np.array_equal(halved, 0.5 * h0.data)

    # interior translation equivariance, exact
    w = cells.init_squeezed_gru(rng, 3, 2, dtype=np.float64)
    xb = rng.standard_normal((1, 3, 10, 10))
    hb = rng.standard_normal((1, 2, 10, 10))
    base = cells.squeezed_gru_step(Tensor(xb), Tensor(hb), w).data
    dy, dx = 1, 2
    moved = cells.squeezed_gru_step(
        Tensor(np.roll(xb, (dy, dx), axis=(2, 3))),
        Tensor(np.roll(hb, (dy, dx), axis=(2, 3))), w).data
    rolled = np.roll(base, (dy, dx), axis=(2, 3))
    r = 2
    shift_ok = np.array_equal(moved[:, :, r + dy:-r, r + dx:-r],
                              rolled[:, :, r + dy:-r, r + dx:-r])

    _report(7, pixelwise_ok and zero_ok and shift_ok,
            f"1x1-conv==dense max diff {max_diff:.2e} (<=1e-6), "
            f"zero-weight halving={zero_ok}, equivariance={shift_ok}")


def _bench_config(seed, gru, ie):
    return TrainConfig(epochs=60, image_size=48, n_train=50, n_test=20,
                       sequence_len=10, seed=seed, gru_placement=gru,
                       ie_placement=ie)


def test_c08_toy_end_to_end_benefit():
    t0 = time.time()
    maps = {"base": [], "ie": [], "full": []}
    recalls = {"base": [], "full": []}
    for seed in BENCH_SEEDS:
        for name, gru, ie in (("base", None, None), ("ie", None, "stage-3"),
                              ("full", "stage-3", "stage-3")):
            res = train_and_eval(_bench_config(seed, gru, ie))
            maps[name].append(res["metrics"]["map"])
            if name in recalls:
                recalls[name].append(degraded_frame_recall(
                    res["model"], res["test"], conf_thresh=0.25))
    med = {k: statistics.median(v) for k, v in maps.items()}
    med_rec = {k: statistics.median(v) for k, v in recalls.items()}
    elapsed = time.time() - t0
    gain_ok = med["full"] >= med["base"] + 0.02
    ie_ok = med["ie"] >= med["base"] - 0.01
    temporal_ok = med_rec["full"] > med_rec["base"]
    _report(8, gain_ok and ie_ok and temporal_ok and elapsed < 900.0,
            f"median mAP base={med['base']:.4f} ie={med['ie']:.4f} "
            f"full={med['full']:.4f} (need full>=base+0.02, ie>=base-0.01); "
            f"degraded-frame recall base={med_rec['base']:.3f} "
            f"full={med_rec['full']:.3f}; {elapsed:.0f}s (<900s)")


def test_c09_ablation_harness_parity():
    cfg = TrainConfig(image_size=32, n_train=3, n_test=2, epochs=2, batch_size=3,
                      sequence_len=3, seed=11, gru_placement="stage-3",
                      ie_placement=None)
    placements = ["None", "stage-1", "stage-2", "stage-3", "stage-4",
                  "extra-map-1", "extra-map-2"]
    rows = run_ablation(placements, cfg, module="gru")
    names_ok = [r["placement"] for r in rows] == placements
    standalone = train_and_eval(TrainConfig(**{**cfg.to_dict(),
                                               "gru_placement": None}))
    none_row = rows[0]["map"]
    exact = none_row == standalone["metrics"]["map"]
    _report(9, names_ok and exact,
            f"{len(rows)} rows, names_ok={names_ok}, "
            f"None row {none_row!r} == standalone {standalone['metrics']['map']!r}: "
            f"{exact}")


def test_c10_cli_determinism(tmp_path):
    import json

    from entrogru.cli import main
    from entrogru.detect.data import generate_dataset
    from entrogru.imagefile import write_pgm
    from entrogru.entropy import to_grayscale

    frame = generate_dataset(4, 1, image_size=32, seq_len=1)[0].frames[0]
    src = tmp_path / "frame.pgm"
    write_pgm(src, to_grayscale(frame))
    train_cfg = tmp_path / "train.json"
    train_cfg.write_text(json.dumps({
        "image_size": 32, "n_train": 3, "n_test": 2, "epochs": 2,
        "batch_size": 3, "sequence_len": 3, "seed": 5,
        "gru_placement": "stage-3", "ie_placement": "stage-3"}))

    def run_all(tag):
        d = tmp_path / tag
        d.mkdir()
        assert main(["entropy", str(src), "-o", str(d / "ie.pgm"), "--raw"]) == 0
        assert main(["cost", "-o", str(d / "cost.csv")]) == 0
        assert main(["train-toy", "--config", str(train_cfg),
                     "-o", str(d / "run")]) == 0
        assert main(["eval-toy", "--model", str(d / "run"),
                     "-o", str(d / "eval")]) == 0
        assert main(["ablate", "--placements", "None,stage-3",
                     "--config", str(train_cfg), "-o", str(d / "ab.csv")]) == 0
        return d

    a = run_all("a")
    b = run_all("b")
    mismatches = []
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    if files_a != files_b:
        mismatches.append("file sets differ")
    for rel in files_a:
        if (a / rel).read_bytes() != (b / rel).read_bytes():
            mismatches.append(str(rel))
    _report(10, not mismatches,
            f"{len(files_a)} artifacts byte-compared; mismatches={mismatches}")
