import csv
from pathlib import Path

import numpy as np
import pytest

from heartnet import cli, dsp
from heartnet.config import ConfigError, RunConfig, load_config, parse_config
from heartnet.dataset import BINARY_CODES, CLASS_CODES, ClassLabel, SegmentIndex, binary_projection
from heartnet.models import build, load_model
from heartnet.synth import synthetic_recordings, write_corpus
from heartnet.training import NumericError, fit, minibatches

from conftest import sha256, write_config


def _cfg(tmp_path, corpus, **kw):
    base = dict(manifest=corpus / "manifest.csv", audio_dir=corpus / "audio", out=tmp_path / "out",
                model="mbdcn", classes=2, epochs=2, batch_size=16, folds=2)
    base.update(kw)
    return write_config(tmp_path, **base)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- configuration ----------------------------------------------------------------

def test_parse_config_types_and_comments():
    vals = parse_config("# header\nepochs = 3  # inline\nclass_weighting = yes\nlearning_rate=0.5\n\n")
    assert vals == {"epochs": 3, "class_weighting": True, "learning_rate": 0.5}


def test_parse_config_errors():
    with pytest.raises(ConfigError, match=":2: unknown key 'epoch'"):
        parse_config("seed = 1\nepoch = 3\n", "x.cfg")
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config("epochs 3\n")
    with pytest.raises(ConfigError, match="boolean"):
        parse_config("skip_bad = maybe\n")


@pytest.mark.parametrize("bad", [dict(epochs=0), dict(batch_size=1), dict(classes=3),
                                 dict(learning_rate=-1.0), dict(model="vgg"), dict(momentum=1.0)])
def test_run_config_validation(bad):
    with pytest.raises(ConfigError):
        RunConfig(**bad)


def test_load_config_paths_and_overrides(tmp_path):
    p = tmp_path / "sub" / "a.cfg"
    p.parent.mkdir()
    p.write_text("manifest = data/m.csv\nout = /abs/out\nseed = 4\n")
    cfg = load_config(p, seed=9, model=None)
    assert cfg.manifest == str(p.parent / "data" / "m.csv")
    assert cfg.out == "/abs/out" and cfg.seed == 9
    assert cfg.cache_path == cfg.out_dir / "psd_cache.bin"
    assert load_config(p, class_weighting=False).class_weighting is False


def test_config_snapshot_round_trips(tmp_path):
    cfg = RunConfig(model="cnn1d", classes=2, class_weighting=True, out=str(tmp_path))
    snap = cfg.snapshot(tmp_path / "elsewhere")
    back = load_config(snap)
    assert back.manifest == str(Path("manifest.csv").absolute())
    assert back.replace(manifest=cfg.manifest, audio_dir=cfg.audio_dir) == cfg


# -- preprocess ----------------------------------------------------------------

def test_preprocess_three_recordings(tmp_path):
    corpus = tmp_path / "c"
    write_corpus(corpus, synthetic_recordings(3, 12.0, 44100, seed=0))
    cfg = load_config(_cfg(tmp_path, corpus))
    cache, index = cli.cmd_preprocess(cfg)
    X = dsp.read_psd_cache(cache)
    assert X.shape == (1, 129, 1, 6)
    assert np.all(X >= 0)
    idx = SegmentIndex.read(index)
    assert idx.segment_ids[:2] == ["rec0000_000", "rec0000_001"]
    first = sha256(cache)
    cli.cmd_preprocess(cfg)
    assert sha256(cache) == first
    assert (cfg.out_dir / "config.resolved").exists()


def test_preprocess_missing_file_and_skip_bad(tmp_path, binary_corpus):
    corpus = tmp_path / "c"
    write_corpus(corpus, synthetic_recordings(4, 6.0, 4000, seed=0))
    (corpus / "audio" / "rec0002.wav").unlink()
    assert cli.main(["preprocess", "--config", str(_cfg(tmp_path, corpus))]) == cli.EXIT_DATA
    cfg = _cfg(tmp_path, corpus, skip_bad=True)
    assert cli.main(["preprocess", "--config", str(cfg)]) == cli.EXIT_OK
    assert len(SegmentIndex.read(tmp_path / "out" / "segments.csv")) == 3


def test_preprocess_drops_constant_segments(tmp_path):
    corpus = tmp_path / "c"
    recs = synthetic_recordings(2, 5.0, 2000, seed=0)
    recs[1].samples[:] = 0.0
    write_corpus(corpus, recs)
    cli.cmd_preprocess(load_config(_cfg(tmp_path, corpus)))
    assert SegmentIndex.read(tmp_path / "out" / "segments.csv").segment_ids == ["rec0000_000"]


def test_preprocess_float_wav(tmp_path):
    corpus = tmp_path / "c"
    write_corpus(corpus, synthetic_recordings(2, 5.0, 8000, seed=0), float_wav=True)
    cache, _ = cli.cmd_preprocess(load_config(_cfg(tmp_path, corpus)))
    assert dsp.read_psd_cache(cache).shape[-1] == 2


# -- train ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def prepared(tmp_path_factory, binary_corpus):
    root = tmp_path_factory.mktemp("prepared")
    cfg = load_config(_cfg(root, binary_corpus))
    cli.cmd_preprocess(cfg)
    return root, cfg


def test_train_outputs_and_determinism(tmp_path, prepared):
    _, cfg = prepared
    a = cli.cmd_train(cfg, out=tmp_path / "a")
    b = cli.cmd_train(cfg, out=tmp_path / "b")
    assert sha256(a) == sha256(b)
    log = _read_csv(tmp_path / "a" / "train_log.csv")
    assert log[0] == ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]
    assert len(log) == 1 + cfg.epochs
    assert (tmp_path / "a" / "split.csv").read_text() == (tmp_path / "b" / "split.csv").read_text()
    assert (tmp_path / "a" / "config.resolved").exists()


def test_zero_learning_rate_leaves_parameters(tmp_path, prepared):
    _, cfg = prepared
    cfg = cfg.replace(model="cnn1d", learning_rate=0.0)
    ckpt = cli.cmd_train(cfg, out=tmp_path)
    fresh = build("cnn1d", 129, 2, seed=cfg.seed)
    trained = load_model(ckpt)
    for (k, a), (_, b) in zip(fresh.state(), trained.state()):
        assert a.tobytes() == b.tobytes(), k
    # No batch norm or dropout in this model: train accuracy is the untrained baseline each epoch.
    accs = {row[2] for row in _read_csv(tmp_path / "train_log.csv")[1:]}
    assert len(accs) == 1


def test_minibatches_merge_singleton():
    sizes = [b.size for b in minibatches(33, 16, np.random.default_rng(0))]
    assert sizes == [16, 17]
    batches = minibatches(40, 16, np.random.default_rng(0))
    assert sorted(np.concatenate(batches).tolist()) == list(range(40))


def test_fit_reports_numeric_failure_coordinates():
    model = build("mlp", 129, 2, seed=0)
    X = np.random.default_rng(0).random((1, 129, 8))
    with pytest.raises(NumericError, match="epoch 1, batch"):
        fit(model, X, np.array([0, 1] * 4), epochs=1, lr=1e30, batch_size=4)


def test_fit_keeps_best_validation_epoch():
    model = build("mlp", 129, 2, seed=0, transform="log")
    rng = np.random.default_rng(0)
    X = rng.random((1, 129, 20))
    y = np.array([0, 1] * 10)
    res = fit(model, X, y, X, y, epochs=4, lr=0.01, batch_size=10)
    best = max(range(4), key=lambda i: (res.history[i]["val_acc"], -i))
    assert res.best_epoch == best + 1
    assert res.best_val_acc == res.history[best]["val_acc"]


# -- evaluate ----------------------------------------------------------------------

def test_evaluate_binary(tmp_path, prepared):
    _, cfg = prepared
    ckpt = cli.cmd_train(cfg, out=tmp_path)
    reports = cli.cmd_evaluate(cfg, ckpt, out=tmp_path)
    assert set(reports) == {"binary"}
    rows = _read_csv(tmp_path / "metrics_binary.csv")
    assert rows[0] == ["Fold", "AC", "PR", "SE", "F1", "SP", "K"]
    cm = _read_csv(tmp_path / "confusion_binary.csv")
    assert cm[0] == ["true\\pred", *BINARY_CODES, "Sensitivity"]
    # Separable synthetic classes: the held-out split is classified perfectly.
    assert reports["binary"].AC == 100 and reports["binary"].K == 100


def test_evaluate_refuses_mismatched_checkpoint(tmp_path, prepared):
    root, cfg = prepared
    cli.cmd_train(cfg, out=tmp_path)
    argv = ["evaluate", "--config", str(root / "run.cfg"), "--model", "mlp",
            "--checkpoint", str(tmp_path / "checkpoint.bin")]
    assert cli.main(argv) == cli.EXIT_USAGE


def test_evaluate_twelve_class_projection(tmp_path, twelve_corpus):
    cfg = load_config(_cfg(tmp_path, twelve_corpus, classes=12, model="mlp", epochs=2, batch_size=8))
    cli.cmd_preprocess(cfg)
    reports = cli.cmd_evaluate(cfg, cli.cmd_train(cfg))
    assert set(reports) == {"twelve", "binary"}
    cm12 = np.array([r[1:13] for r in _read_csv(cfg.out_dir / "confusion_twelve.csv")[1:13]], dtype=int)
    cm2 = np.array([r[1:3] for r in _read_csv(cfg.out_dir / "confusion_binary.csv")[1:3]], dtype=int)
    proj = binary_projection()
    expect = np.zeros((2, 2), dtype=int)
    for i in range(12):
        for j in range(12):
            expect[proj[i], proj[j]] += cm12[i, j]
    np.testing.assert_array_equal(cm2, expect)
    assert _read_csv(cfg.out_dir / "confusion_twelve.csv")[0][1:13] == list(CLASS_CODES)


# -- crossval ----------------------------------------------------------------------

def test_crossval_layout_and_kappa_bound(tmp_path, prepared):
    _, cfg = prepared
    cfg = cfg.replace(out=str(tmp_path), cache=str(cfg.cache_path), index=str(cfg.index_path),
                      folds=5, epochs=1, model="mlp")
    paths = cli.cmd_crossval(cfg)
    rows = _read_csv(paths["binary"])
    assert [r[0] for r in rows] == ["Fold"] + [f"Fold {i}" for i in range(1, 6)] + ["Mean", "Std"]
    for r in rows[1:6]:
        ac, k = float(r[1]), float(r[6])
        assert 0 <= ac <= 100 and k <= ac
    for i in range(1, 6):
        assert (tmp_path / f"fold{i}" / "checkpoint.bin").exists()


def test_crossval_fixed_split_has_zero_std(tmp_path, prepared):
    _, cfg = prepared
    cfg = cfg.replace(out=str(tmp_path), cache=str(cfg.cache_path), index=str(cfg.index_path),
                      folds=3, epochs=1, model="mlp", fixed_split=True)
    std = _read_csv(cli.cmd_crossval(cfg)["binary"])[-1]
    assert std == ["Std"] + ["0.00"] * 6


def test_crossval_fold_failure_keeps_earlier_folds(tmp_path, prepared, monkeypatch):
    _, cfg = prepared
    cfg = cfg.replace(out=str(tmp_path), cache=str(cfg.cache_path), index=str(cfg.index_path),
                      folds=3, epochs=1, model="mlp")
    real = cli.cmd_evaluate
    calls = []

    def flaky(*a, **kw):
        calls.append(1)
        if len(calls) == 2:
            raise NumericError(1, 1)
        return real(*a, **kw)

    monkeypatch.setattr(cli, "cmd_evaluate", flaky)
    with pytest.raises(cli.FoldError, match="fold 2"):
        cli.cmd_crossval(cfg)
    assert (tmp_path / "fold1" / "metrics_binary.csv").exists()
    assert cli._exit_code(cli.FoldError(2, NumericError(1, 1))) == cli.EXIT_NUMERIC


# -- entry point -------------------------------------------------------------------

def test_exit_codes(tmp_path, binary_corpus):
    assert cli.main(["--help"]) == cli.EXIT_OK
    assert cli.main(["frobnicate"]) == cli.EXIT_USAGE
    assert cli.main(["train", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_USAGE
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "m.csv").write_text("id,what\n")
    cfg = write_config(bad, manifest=bad / "m.csv", audio_dir=bad, out=bad / "out")
    assert cli.main(["preprocess", "--config", str(cfg)]) == cli.EXIT_DATA
    # Training before preprocessing: no cache.
    assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_DATA


def test_cli_overrides(tmp_path, prepared):
    root, cfg = prepared
    argv = ["train", "--config", str(root / "run.cfg"), "--model", "cnn1d", "--seed", "5",
            "--no-class-weights", "--out", str(tmp_path / "o")]
    # --out moves the cache lookup too, so point it back at the prepared cache first.
    (tmp_path / "o").mkdir()
    for name in ("psd_cache.bin", "segments.csv"):
        (tmp_path / "o" / name).write_bytes((cfg.out_dir / name).read_bytes())
    assert cli.main(argv) == cli.EXIT_OK
    snap = load_config(tmp_path / "o" / "config.resolved")
    assert (snap.model, snap.seed, snap.class_weighting) == ("cnn1d", 5, False)


def test_class_weighting_flag(tmp_path, prepared):
    _, cfg = prepared
    ckpt = cli.cmd_train(cfg.replace(class_weighting=True, epochs=1), out=tmp_path)
    assert ckpt.exists()


def test_twelve_mode_labels():
    assert ClassLabel("E", "Abnormal").target("binary") == BINARY_CODES.index("Abnormal")
