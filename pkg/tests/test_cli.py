"""End-to-end CLI flows on small seeded corpora."""

import csv
import json
import subprocess
import sys

import pytest

from farecast.cli import main


def run_cli(argv, capsys=None):
    code = main(argv)
    return code


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A small specific corpus (8 routes) plus its split file."""
    root = tmp_path_factory.mktemp("cli")
    quotes = root / "quotes.csv"
    split_json = root / "split.json"
    code = main([
        "gen-data", "--seed", "3", "--out", str(quotes),
        "--routes", "8", "--departures", "5", "--horizon", "12",
        "--split-out", str(split_json),
    ])
    assert code == 0
    return root


@pytest.fixture(scope="module")
def gen_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_gen")
    gen_quotes = root / "gen.csv"
    code = main([
        "gen-data", "--generalized", "--seed", "7", "--out", str(gen_quotes),
        "--routes", "12", "--departures", "2", "--horizon", "10",
    ])
    assert code == 0
    return gen_quotes


def base_args(workdir, extra):
    return [
        "--quotes", str(workdir / "quotes.csv"),
        "--split-config", str(workdir / "split.json"),
    ] + extra


# -- gen-data -----------------------------------------------------------------


def test_gen_data_writes_corpus_and_split(workdir, capsys):
    quotes = workdir / "quotes.csv"
    with open(quotes, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["route_id", "departure_date", "query_date", "price"]
    assert len(rows) - 1 == 8 * 5 * 12
    split_cfg = json.loads((workdir / "split.json").read_text())
    assert set(split_cfg) == {"train_start", "train_end", "test_start", "test_end"}


def test_gen_data_same_seed_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["gen-data", "--seed", "9", "--out", str(out),
                     "--routes", "2", "--departures", "2", "--horizon", "9"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_gen_data_generalized_routes(gen_corpus):
    with open(gen_corpus, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    routes = {r[0] for r in rows}
    assert routes == {f"R{n}" for n in range(9, 21)}


# -- backtest -----------------------------------------------------------------


def read_report(path):
    return json.loads(path.read_text())


def test_backtest_report_structure(workdir):
    out = workdir / "backtest.json"
    code = main(["backtest"] + base_args(workdir, [
        "--task", "classification", "--model", "cart",
        "--hyperparams", '{"max_depth": 3}',
        "--seed", "5", "--out", str(out),
    ]))
    assert code == 0
    report = read_report(out)
    assert report["command"] == "backtest"
    assert report["seed"] == 5
    bt = report["backtest"]
    assert bt["n_routes"] == 8
    assert len(bt["per_route"]) == 8
    assert [m["route_id"] for m in bt["per_route"]] == [f"R{i}" for i in range(1, 9)]
    for m in bt["per_route"]:
        assert set(m) >= {"random_purchase_price", "optimal_price", "predicted_price",
                          "performance_pct", "normalized_performance_pct"}
    assert isinstance(bt["mean_normalized_pct"], float)
    assert "split" in report["config"]
    assert report["config"]["spec"]["kind"] == "cart"


def test_backtest_is_regenerable_byte_identical(workdir):
    outs = []
    for name in ("r1.json", "r2.json"):
        out = workdir / name
        code = main(["backtest"] + base_args(workdir, [
            "--task", "classification", "--model", "knn",
            "--hyperparams", '{"k": 3}', "--seed", "4", "--out", str(out),
        ]))
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_train_then_load_matches_fresh_train(workdir):
    model_path = workdir / "model.json"
    train_out = workdir / "train.json"
    code = main(["train"] + base_args(workdir, [
        "--task", "classification", "--model", "adaboost_cart",
        "--hyperparams", '{"n_rounds": 10, "weak_depth": 1}',
        "--seed", "6", "--save-model", str(model_path), "--out", str(train_out),
    ]))
    assert code == 0
    assert model_path.exists()
    train_report = read_report(train_out)
    assert train_report["command"] == "train"
    assert "train_summary" in train_report

    fresh_out = workdir / "fresh.json"
    loaded_out = workdir / "loaded.json"
    code = main(["backtest"] + base_args(workdir, [
        "--task", "classification", "--model", "adaboost_cart",
        "--hyperparams", '{"n_rounds": 10, "weak_depth": 1}',
        "--seed", "6", "--out", str(fresh_out),
    ]))
    assert code == 0
    code = main(["backtest"] + base_args(workdir, [
        "--load-model", str(model_path), "--seed", "6", "--out", str(loaded_out),
    ]))
    assert code == 0
    assert read_report(fresh_out)["backtest"] == read_report(loaded_out)["backtest"]


def test_backtest_side_outputs(workdir):
    out = workdir / "side.json"
    report_csv = workdir / "metrics.csv"
    plot_csv = workdir / "decisions.csv"
    feats_csv = workdir / "features.csv"
    code = main(["backtest"] + base_args(workdir, [
        "--task", "classification", "--model", "cart",
        "--hyperparams", '{"max_depth": 2}', "--seed", "5",
        "--out", str(out), "--report-csv", str(report_csv),
        "--plot-data", str(plot_csv), "--dump-features", str(feats_csv),
        "--simulate-random", "50",
    ]))
    assert code == 0
    with open(report_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "route_id"
    assert len(rows) - 1 == 8
    with open(plot_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) - 1 == 8 * 2  # one decision per test series
    with open(feats_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) - 1 == 8 * 2 * 12  # every test quote becomes a row
    report = read_report(out)
    assert set(report["simulated_random"]) == {f"R{i}" for i in range(1, 9)}


def test_backtest_without_model_or_load_fails(workdir, capsys):
    code = main(["backtest"] + base_args(workdir, ["--seed", "1"]))
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "FarecastError"
    assert "--load-model" in err["message"] or "--model" in err["message"]


def test_missing_quotes_file_exits_two(workdir, capsys, tmp_path):
    code = main(["backtest", "--quotes", str(tmp_path / "nope.csv"),
                 "--task", "classification", "--model", "cart"])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] in ("FileNotFound", "ParseError")


# -- tune ---------------------------------------------------------------------


def test_tune_with_config_grid(workdir):
    cfg_path = workdir / "tune_cfg.json"
    cfg_path.write_text(json.dumps({
        "grids": {"cart": [{"max_depth": 2}, {"max_depth": 4}]},
    }))
    out = workdir / "tune.json"
    table_csv = workdir / "tune.csv"
    code = main(["tune"] + base_args(workdir, [
        "--task", "classification", "--model", "cart",
        "--config", str(cfg_path), "--seed", "2",
        "--out", str(out), "--report-csv", str(table_csv),
    ]))
    assert code == 0
    report = read_report(out)
    assert report["command"] == "tune"
    assert len(report["cv_table"]) == 2
    assert report["best_spec"]["kind"] == "cart"
    best_depth = report["best_spec"]["hyperparams"]["max_depth"]
    assert best_depth in (2, 4)
    best_cell = min((c for c in report["cv_table"] if not c["failed"]),
                    key=lambda c: c["mean_loss"])
    assert best_cell["spec"]["hyperparams"]["max_depth"] == best_depth
    with open(table_csv, newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) - 1 == 2


# -- qlearn ---------------------------------------------------------------------


def test_qlearn_round_trip(workdir):
    table_path = workdir / "qtable.json"
    out1 = workdir / "q1.json"
    code = main(["qlearn"] + base_args(workdir, [
        "--episodes", "20", "--alpha", "0.5", "--seed", "8",
        "--save-table", str(table_path), "--out", str(out1),
    ]))
    assert code == 0
    report = read_report(out1)
    assert report["command"] == "qlearn"
    assert report["d_max"] == 11
    assert report["backtest"]["n_routes"] == 8
    assert report["config"]["episodes"] == 20

    out2 = workdir / "q2.json"
    code = main(["qlearn"] + base_args(workdir, [
        "--load-table", str(table_path), "--seed", "8", "--out", str(out2),
    ]))
    assert code == 0
    assert read_report(out1)["backtest"] == read_report(out2)["backtest"]


# -- generalize ------------------------------------------------------------------


@pytest.fixture(scope="module")
def frozen_and_blend(workdir):
    frozen = workdir / "frozen.json"
    code = main(["train"] + base_args(workdir, [
        "--task", "classification", "--model", "cart",
        "--hyperparams", '{"max_depth": 3}', "--seed", "5",
        "--save-model", str(frozen),
    ]))
    assert code == 0
    blend = workdir / "blend.json"
    code = main(["train"] + base_args(workdir, [
        "--task", "classification", "--model", "uniform_blend",
        "--hyperparams", '{"member_kind": "cart", "member_params": {"max_depth": 2}}',
        "--seed", "5", "--save-model", str(blend),
    ]))
    assert code == 0
    return frozen, blend


def test_generalize_fit_bank_and_reuse(workdir, gen_corpus, frozen_and_blend):
    frozen, blend = frozen_and_blend
    cfg_path = workdir / "gen_cfg.json"
    cfg_path.write_text(json.dumps({"hmm": {"max_iter": 15}}))
    bank_dir = workdir / "bank"
    out1 = workdir / "gen1.json"
    code = main(["generalize"] + base_args(workdir, [
        "--gen-quotes", str(gen_corpus), "--frozen-model", str(frozen),
        "--config", str(cfg_path), "--n-states", "2", "--seed", "1",
        "--bank-out", str(bank_dir), "--blend-model", str(blend),
        "--out", str(out1),
    ]))
    assert code == 0
    for i in range(8):
        assert (bank_dir / f"hmm_{i}.json").exists()
    report = read_report(out1)
    assert report["command"] == "generalize"
    assert report["hmm"]["n_routes"] == 12
    assert report["uniform"]["n_routes"] == 12
    assert set(report["template_counts"]) == {f"R{n}" for n in range(9, 21)}
    for counts in report["template_counts"].values():
        assert sum(counts.values()) == 2 * 10  # 2 series x 10 rows per route

    # a saved bank must reproduce the identical report
    out2 = workdir / "gen2.json"
    code = main(["generalize"] + base_args(workdir, [
        "--gen-quotes", str(gen_corpus), "--frozen-model", str(frozen),
        "--config", str(cfg_path), "--n-states", "2", "--seed", "1",
        "--bank", str(bank_dir), "--blend-model", str(blend),
        "--out", str(out2),
    ]))
    assert code == 0
    r1, r2 = read_report(out1), read_report(out2)
    assert r1["hmm"] == r2["hmm"]
    assert r1["uniform"] == r2["uniform"]
    assert r1["template_counts"] == r2["template_counts"]


def test_generalize_per_series_flag(workdir, gen_corpus, frozen_and_blend):
    frozen, _ = frozen_and_blend
    cfg_path = workdir / "gen_cfg.json"
    out = workdir / "gen_ps.json"
    code = main(["generalize"] + base_args(workdir, [
        "--gen-quotes", str(gen_corpus), "--frozen-model", str(frozen),
        "--config", str(cfg_path), "--n-states", "2", "--seed", "1",
        "--bank", str(workdir / "bank"), "--per-series", "--out", str(out),
    ]))
    assert code == 0
    report = read_report(out)
    assert report["config"]["per_series"] is True
    # one classification per series: each series contributes one template
    for counts in report["template_counts"].values():
        for n in counts.values():
            assert n % 10 == 0  # whole series of 10 rows share one template


def test_generalize_requires_bank_or_quotes(gen_corpus, workdir, frozen_and_blend, capsys):
    frozen, _ = frozen_and_blend
    code = main([
        "generalize", "--gen-quotes", str(gen_corpus),
        "--frozen-model", str(frozen), "--seed", "1",
    ])
    assert code == 2
    err = json.loads(capsys.readouterr().err)
    assert "bank" in err["message"]


# -- process-level entry --------------------------------------------------------


def test_module_entry_point(tmp_path):
    out = tmp_path / "x.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "farecast.cli", "gen-data", "--seed", "1",
         "--out", str(out), "--routes", "1", "--departures", "1", "--horizon", "8"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "wrote 8 quotes" in proc.stdout
    assert out.exists()
