import math
import os

import numpy as np
import pytest

from eyecenter import imagecore as ic
from eyecenter.cli import build_config, main, parse_config_text, parse_grid, UsageError
from eyecenter.evaluation import parse_eye_file
from eyecenter.pipeline import parse_regions_manifest
from eyecenter.synth import synth_frame, write_corpus

from band_corpus import write_band_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    assert main(["synth", str(d), "--count", "10", "--seed", "3"]) == 0
    return d


def outerr(capsys):
    c = capsys.readouterr()
    return c.out, c.err


# ------------------------------------------------------------------ config

def test_grid_specs():
    assert parse_grid("60:10:100") == [60, 70, 80, 90, 100]
    assert parse_grid("13,26, 38") == [13, 26, 38]
    assert parse_grid("77") == [77]
    for bad in ("60:0:100", "a,b", "300", ""):
        with pytest.raises(UsageError):
            parse_grid(bad)


def test_config_file_parsing_and_validation():
    vals = parse_config_text("# comment\nt_b = 90   # inline\n\nface_min_size = none\nr_max_frac=0.4\n")
    cfg = build_config(vals)
    assert cfg.t_b == 90 and cfg.face_detect.min_size is None and cfg.hough.r_max_frac == 0.4
    with pytest.raises(UsageError, match="unknown"):
        build_config({"t_x": "1"})
    with pytest.raises(UsageError, match="t_b"):
        build_config({"t_b": "300"})
    with pytest.raises(UsageError, match="cannot parse"):
        build_config({"t_b": "abc"})
    with pytest.raises(UsageError, match="key = value"):
        parse_config_text("t_b 77")


def test_flags_override_config_file(corpus, tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("t_b = 40\nt_e = 0.25\n")
    rep = tmp_path / "r.txt"
    args = ["evaluate", str(corpus), "--regions", str(corpus / "regions.txt"), "--config", str(cfg),
            "--t-b", "90", "--grid", "77", "--report", str(rep)]
    assert main(args) == 0
    text = rep.read_text()
    assert "# t_b = 90" in text and "# t_e = 0.25" in text


# ------------------------------------------------------------------ detect

def test_detect_matches_generator(corpus, tmp_path, capsys):
    img = corpus / "synth_0000.pgm"
    ann, csv = tmp_path / "a.pgm", tmp_path / "a.csv"
    assert main(["detect", str(img), "--regions", str(corpus / "regions.txt"),
                 "--annotate", str(ann), "--csv", str(csv)]) == 0
    out, _ = outerr(capsys)
    lx, ly, rx, ry, ml, mr = out.split()
    gt = parse_eye_file((corpus / "synth_0000.eye").read_text())
    assert math.dist((int(lx), int(ly)), gt.left) <= 2 and math.dist((int(rx), int(ry)), gt.right) <= 2
    assert ml == mr == "hough_min_intensity"
    assert ic.read_pgm(ann).shape == (286, 384)
    assert csv.read_text().splitlines()[1].startswith("synth_0000.pgm,")


def test_detect_needs_exactly_one_region_source(corpus, capsys):
    img = str(corpus / "synth_0000.pgm")
    assert main(["detect", img]) == 2
    _, err = outerr(capsys)
    assert err.startswith("usage:")
    assert main(["detect", img, "--regions", str(corpus / "regions.txt"), "--builtin-cascades"]) == 2
    assert main(["detect", img, "--face-model", "x.xml"]) == 2


def test_detect_unreadable_inputs(corpus, tmp_path, capsys):
    regions = str(corpus / "regions.txt")
    assert main(["detect", str(tmp_path / "missing.pgm"), "--regions", regions]) == 3
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P5\n10 10\n255\n\x00")
    assert main(["detect", str(bad), "--regions", regions]) == 3
    _, err = outerr(capsys)
    assert "raster" in err
    assert main(["detect", str(corpus / "synth_0000.pgm"), "--face-model", str(bad),
                 "--eye-model", str(bad)]) == 3


def test_detect_with_model_files(tmp_path, capsys):
    from importlib import resources
    frame, _, _ = synth_frame(np.random.default_rng(0))
    ic.write_pgm(tmp_path / "f.pgm", frame)
    data = resources.files("eyecenter.data")
    face = str(data.joinpath("haarcascade_frontalface_default.xml"))
    eye = str(data.joinpath("haarcascade_eye.xml"))
    assert main(["detect", str(tmp_path / "f.pgm"), "--face-model", face, "--eye-model", eye]) == 0
    assert len(outerr(capsys)[0].split()) == 6


# ---------------------------------------------------------------- evaluate

def test_evaluate_report_is_monotone_and_byte_stable(corpus, tmp_path, capsys):
    reports = []
    for i in range(2):
        rep, rcsv, res = (tmp_path / f"r{i}.txt", tmp_path / f"r{i}.csv", tmp_path / f"res{i}.csv")
        args = ["evaluate", str(corpus), "--regions", str(corpus / "regions.txt"), "--seed", "5",
                "--grid", "51,77,102", "--report", str(rep), "--report-csv", str(rcsv), "--csv", str(res)]
        if i:
            args += ["--jobs", "2"]
        assert main(args) == 0
        reports.append((rep.read_bytes(), rcsv.read_bytes(), res.read_bytes()))
    assert reports[0] == reports[1]
    fr = [float(v) for v in outerr(capsys)[0].split()[:5]]
    assert len(fr) == 5 and fr == sorted(fr)
    assert len(reports[0][2].decode().splitlines()) == 11


def test_evaluate_empty_dataset(tmp_path):
    (tmp_path / "regions.txt").write_text("")
    assert main(["evaluate", str(tmp_path), "--regions", str(tmp_path / "regions.txt")]) == 3


# -------------------------------------------------------------------- tune

def test_tune_band_corpus(tmp_path, capsys):
    d = write_band_corpus(str(tmp_path / "band"))
    frag = tmp_path / "tb.cfg"
    assert main(["tune", d, "--regions", os.path.join(d, "regions.txt"), "--out", str(frag)]) == 0
    out, _ = outerr(capsys)
    assert out.splitlines()[0] == "t_b = 64"
    assert build_config(parse_config_text(frag.read_text())).t_b == 64


def test_tune_single_value_grid(corpus, capsys):
    assert main(["tune", str(corpus), "--regions", str(corpus / "regions.txt"), "--grid", "115"]) == 0
    assert outerr(capsys)[0].splitlines()[0] == "t_b = 115"


def test_tune_bad_grid_is_usage_error(corpus):
    assert main(["tune", str(corpus), "--regions", str(corpus / "regions.txt"), "--grid", "1:x:3"]) == 2


# ------------------------------------------------------------------- synth

def test_synth_count_zero(tmp_path):
    assert main(["synth", str(tmp_path / "z"), "--count", "0"]) == 0
    assert parse_regions_manifest((tmp_path / "z" / "regions.txt").read_text()) == {}


def test_synth_is_seed_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", str(tmp_path / name), "--count", "3", "--seed", "8"]) == 0
    for f in sorted(os.listdir(tmp_path / "a")):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["synth", str(blocker / "sub"), "--count", "1"]) == 3


# --------------------------------------------------------------------- szp

def test_szp_clean_eye_contains_centre(corpus, capsys):
    assert main(["szp", str(corpus / "synth_0001.pgm"), "--regions", str(corpus / "regions.txt")]) == 0
    out, _ = outerr(capsys)
    gt = parse_eye_file((corpus / "synth_0001.eye").read_text())
    rois = {}
    for line in out.splitlines():
        side, x, y, w, h = line.split()
        rois[side] = ic.Rect(int(x), int(y), int(w), int(h))
    assert rois["left"].contains(*gt.left) and rois["right"].contains(*gt.right)


def test_szp_hair_band_failure(tmp_path, capsys):
    frame, left, right = synth_frame(np.random.default_rng(2), noise=0, occlusion=0)
    frame = frame.copy()
    for eye in (left, right):
        r = eye.region
        # dark hair: a band just below the eyebrow crop and a strand down the outer edge
        top = r.y + int(math.floor(0.3 * r.h + 0.5))
        frame[top:top + 4, r.x:r.x + r.w] = 5
        frame[top:r.y + r.h, r.x:r.x + 4] = 5
    ic.write_pgm(tmp_path / "hair.pgm", frame)
    (tmp_path / "regions.txt").write_text(f"hair.pgm {' '.join(map(str, left.region))} "
                                          f"{' '.join(map(str, right.region))}\n")
    ann = tmp_path / "ann.pgm"
    assert main(["szp", str(tmp_path / "hair.pgm"), "--regions", str(tmp_path / "regions.txt"),
                 "--annotate", str(ann)]) == 0
    lines = outerr(capsys)[0].splitlines()
    for line, eye in zip(lines, (left, right)):
        roi = ic.Rect(*map(int, line.split()[1:]))
        assert not roi.contains(eye.cx, eye.cy)
    assert ic.read_pgm(ann).shape == frame.shape


def test_szp_missing_regions_flag(corpus):
    assert main(["szp", str(corpus / "synth_0000.pgm")]) == 2
    assert main(["szp", str(corpus / "synth_0000.pgm"), "--regions", "/nonexistent/r.txt"]) == 3


# --------------------------------------------------------------- fallbacks

def test_adversarial_corpus_exits_zero(tmp_path, capsys):
    d = tmp_path / "adv"
    assert main(["synth", str(d), "--adversarial"]) == 0
    res = tmp_path / "res.csv"
    assert main(["evaluate", str(d), "--regions", str(d / "regions.txt"), "--csv", str(res)]) == 0
    rows = res.read_text().splitlines()[1:]
    assert len(rows) == 6
    assert all(r.endswith("region_center_fallback,region_center_fallback") for r in rows)


def test_module_entry_point(corpus):
    import subprocess
    import sys
    proc = subprocess.run([sys.executable, "-m", "eyecenter", "detect", str(corpus / "synth_0000.pgm"),
                           "--regions", str(corpus / "regions.txt")], capture_output=True, text=True)
    assert proc.returncode == 0 and len(proc.stdout.split()) == 6
