"""Config loading, experiment orchestration, output files, and the CLI."""

import dataclasses
import json
from textwrap import dedent

import numpy as np
import pytest

from flicsim import cli
from flicsim.config import load_config
from flicsim.data import ClientDataset, build_scenario
from flicsim.errors import ConfigError
from flicsim.federation import init_rng
from flicsim.harness import (
    effective_groups,
    evaluate_clients,
    run_experiment,
    run_repeated,
)
from flicsim.models import init_params

BASE = """\
[scenario]
kind = label_swap
num_clients = {clients}
num_groups = {groups}
train_per_client = 12
test_per_client = 6
num_classes = 4
feature_dim = 8

[model]
kind = mlp-classifier
hidden_dims = 8

[federation]
participation = {participation}
epochs = 2
batch_size = 6
learning_rate = 0.05
rounds = {rounds}
cluster_rounds = {cluster_rounds}

[clustering]
method = {method}
{clustering_extra}
[output]
dir = {out}
"""


def write_config(tmp_path, name="cfg.ini", clients=8, groups=2,
                 participation=0.5, rounds=4, cluster_rounds=2,
                 method="flic", clustering_extra="", extra="", out=None):
    if clustering_extra and not clustering_extra.endswith("\n"):
        clustering_extra += "\n"
    text = BASE.format(
        clients=clients, groups=groups, participation=participation,
        rounds=rounds, cluster_rounds=cluster_rounds, method=method,
        clustering_extra=clustering_extra,
        out=out if out is not None else tmp_path / "out")
    path = tmp_path / name
    path.write_text(text + dedent(extra))
    return path


# ---------------------------------------------------------------- config --

def test_load_config_resolves_fields(tmp_path):
    cfg = load_config(write_config(tmp_path))
    assert cfg.scenario.kind == "label_swap"
    assert cfg.scenario.num_clients == 8
    assert cfg.model.input_dim == 8
    assert cfg.model.num_classes == 4
    assert cfg.participation == 0.5
    assert cfg.rounds == 4 and cfg.cluster_rounds == 2
    assert cfg.epochs == 2 and cfg.batch_size == 6
    assert cfg.clustering == "flic"
    assert cfg.threat_kind == "none" and cfg.attacker_ids == ()
    # default snapshots: start, midpoint, end of phase one
    assert cfg.snapshot_rounds == (0, 2, 4)


def test_defaults_for_epochs_and_batch_size(tmp_path):
    path = tmp_path / "d.ini"
    path.write_text(dedent("""\
        [scenario]
        kind = iid
        num_clients = 4
        train_per_client = 12
        test_per_client = 6
        num_classes = 3
        feature_dim = 6

        [model]
        kind = mlp-classifier

        [federation]
        participation = 1.0
        rounds = 2
        """))
    cfg = load_config(path)
    assert cfg.epochs == 5
    assert cfg.batch_size == 10


def test_unknown_key_is_reported_with_its_path(tmp_path):
    path = write_config(tmp_path, extra="[threat]\nkind = none\nbogus = 1\n")
    with pytest.raises(ConfigError, match="threat.bogus"):
        load_config(path)


def test_unknown_section_is_an_error(tmp_path):
    path = write_config(tmp_path, extra="[federashun]\nrounds = 3\n")
    with pytest.raises(ConfigError, match="federashun"):
        load_config(path)


def test_missing_required_key_is_named(tmp_path):
    path = tmp_path / "m.ini"
    path.write_text("[scenario]\nkind = iid\nnum_clients = 4\n"
                    "train_per_client = 8\ntest_per_client = 4\n"
                    "[model]\nkind = mlp-classifier\n"
                    "[federation]\nrounds = 2\n")
    with pytest.raises(ConfigError, match="federation.participation"):
        load_config(path)


def test_bad_type_is_named(tmp_path):
    path = write_config(tmp_path, rounds="many")
    with pytest.raises(ConfigError, match="federation.rounds"):
        load_config(path)


def test_constraint_violations(tmp_path):
    with pytest.raises(ConfigError, match="participation"):
        load_config(write_config(tmp_path, "p.ini", participation=1.5))
    with pytest.raises(ConfigError, match="rounds"):
        load_config(write_config(tmp_path, "r.ini", rounds=0))
    with pytest.raises(ConfigError, match="cluster_rounds"):
        load_config(write_config(tmp_path, "c.ini", cluster_rounds=-1))


def test_model_scenario_mismatch(tmp_path):
    path = tmp_path / "mm.ini"
    path.write_text(dedent("""\
        [scenario]
        kind = iid
        num_clients = 4
        train_per_client = 8
        test_per_client = 4

        [model]
        kind = linear-regression-1d

        [federation]
        participation = 1.0
        rounds = 2
        """))
    with pytest.raises(ConfigError, match="regression"):
        load_config(path)


def test_threat_validation(tmp_path):
    bad1 = write_config(tmp_path, "t1.ini",
                        extra="[threat]\nkind = none\nnum_attackers = 2\n")
    with pytest.raises(ConfigError, match="none"):
        load_config(bad1)
    bad2 = write_config(tmp_path, "t2.ini",
                        extra="[threat]\nkind = minus_grad\n"
                              "num_attackers = 2\nattacker_ids = 0,1\n")
    with pytest.raises(ConfigError, match="mutually exclusive"):
        load_config(bad2)
    bad3 = write_config(tmp_path, "t3.ini",
                        extra="[threat]\nkind = minus_grad\n")
    with pytest.raises(ConfigError, match="no attackers"):
        load_config(bad3)
    bad4 = write_config(tmp_path, "t4.ini",
                        extra="[threat]\nkind = minus_grad\n"
                              "attacker_ids = 99\n")
    with pytest.raises(ConfigError, match="attacker ids"):
        load_config(bad4)
    good = write_config(tmp_path, "t5.ini",
                        extra="[threat]\nkind = minus_grad\n"
                              "num_attackers = 3\n")
    assert load_config(good).attacker_ids == (0, 1, 2)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "nope.ini"))


# ------------------------------------------------------------ experiment --

def test_metrics_row_count_matches_run_shape(tmp_path):
    cfg = load_config(write_config(tmp_path, rounds=5, cluster_rounds=2))
    result = run_experiment(cfg, seed=3, write_outputs=False)
    n_clusters = result.partition.num_clusters()
    assert len(result.metrics_rows) == 5 + 2 * n_clusters
    pre = [r for r in result.metrics_rows if r[1] == "pre"]
    post = [r for r in result.metrics_rows if r[1] == "post"]
    assert len(pre) == 5 and len(post) == 2 * n_clusters
    # post rows arrive in round order
    post_rounds = [int(r[0]) for r in post]
    assert post_rounds == sorted(post_rounds)


def test_same_seed_rerun_writes_identical_metrics(tmp_path):
    cfg = load_config(write_config(tmp_path, rounds=4, cluster_rounds=1))
    run_experiment(cfg, seed=7, out_dir=tmp_path / "a")
    run_experiment(cfg, seed=7, out_dir=tmp_path / "b")
    for name in ("metrics.csv", "partition.csv", "similarity_round_4.csv"):
        first = (tmp_path / "a" / name).read_bytes()
        second = (tmp_path / "b" / name).read_bytes()
        assert first == second, name


def test_different_seed_changes_the_run(tmp_path):
    cfg = load_config(write_config(tmp_path, rounds=4, cluster_rounds=0))
    a = run_experiment(cfg, seed=0, write_outputs=False)
    b = run_experiment(cfg, seed=1, write_outputs=False)
    assert a.metrics_rows != b.metrics_rows


def test_plain_baseline_matches_phase_one_of_the_clustered_run(tmp_path):
    flic_cfg = load_config(write_config(tmp_path, "f.ini", rounds=5,
                                        cluster_rounds=2, method="flic"))
    none_cfg = load_config(write_config(tmp_path, "n.ini", rounds=5,
                                        cluster_rounds=0, method="none"))
    a = run_experiment(flic_cfg, seed=11, write_outputs=False)
    b = run_experiment(none_cfg, seed=11, write_outputs=False)
    assert a.metrics_rows[:5] == b.metrics_rows[:5]
    assert np.array_equal(a.global_history[5].values,
                          b.global_history[5].values)
    assert b.partition is None and b.sim is None


def test_unsampled_clients_are_assigned_by_model_fit(tmp_path):
    cfg = load_config(write_config(tmp_path, clients=12, participation=0.1,
                                   rounds=3, cluster_rounds=1))
    result = run_experiment(cfg, seed=5, out_dir=tmp_path / "o")
    assert result.partition.unassigned  # cohort of 1, three rounds
    for cid in result.partition.unassigned:
        assert cid in result.partition.extra
    assert set(result.final_accuracies) == set(range(12))
    lines = (tmp_path / "o" / "partition.csv").read_text().splitlines()
    assert len(lines) == 13
    vias = {line.split(",")[3] for line in lines[1:]}
    assert vias == {"louvain", "unsampled-eval"}


def test_assign_at_clustering_places_extras_before_retraining(tmp_path):
    cfg = load_config(write_config(
        tmp_path, clients=12, participation=0.1, rounds=3, cluster_rounds=1,
        clustering_extra="assign_unsampled = at_clustering"))
    result = run_experiment(cfg, seed=5, write_outputs=False)
    assert result.partition.unassigned
    # cluster models are indistinguishable at the split, so the tie rule
    # sends every late client to the lowest cluster id
    lowest = min(result.partition.assignment.values())
    assert set(result.partition.extra.values()) == {lowest}
    # and the extras really joined phase-two training pools
    joined = {cid for _, rep in result.phase2_reports
              for cid in rep.accuracies}
    assert set(result.partition.extra) <= joined


def test_diagnostic_mode_fills_cluster_columns(tmp_path):
    cfg = load_config(write_config(tmp_path, rounds=4, cluster_rounds=0))
    result = run_experiment(cfg, seed=2, diagnostic=True, write_outputs=False)
    assert len(result.diagnostics) == 4
    for row in result.metrics_rows[:4]:
        assert row[5] != "" and row[6] != ""
    first = result.diagnostics[0]
    assert first.n_stored >= 1 and first.n_clusters >= 1
    assert 0.0 <= first.purity <= 1.0


def test_snapshot_round_zero_is_all_zeros(tmp_path):
    cfg = load_config(write_config(tmp_path, rounds=3, cluster_rounds=0,
                                   clustering_extra="snapshot_rounds = 0,2"))
    run_experiment(cfg, seed=1, out_dir=tmp_path / "snap")
    zero = np.loadtxt(tmp_path / "snap" / "similarity_round_0.csv",
                      delimiter=",")
    assert zero.shape == (8, 8) and np.all(zero == 0.0)
    later = np.loadtxt(tmp_path / "snap" / "similarity_round_2.csv",
                       delimiter=",")
    assert later.max() > 0.0
    assert not (tmp_path / "snap" / "similarity_round_3.csv").exists()


def test_manifest_echoes_config_and_lists_files(tmp_path):
    cfg = load_config(write_config(tmp_path, rounds=3, cluster_rounds=1))
    result = run_experiment(cfg, seed=4, out_dir=tmp_path / "m")
    manifest = json.loads((tmp_path / "m" / "manifest.json").read_text())
    assert manifest["seed"] == 4
    assert manifest["config"]["federation"]["rounds"] == 3
    assert "metrics.csv" in manifest["files"]
    assert "partition.csv" in manifest["files"]
    assert manifest["n_clusters"] == result.partition.num_clusters()


def test_effective_groups_give_attackers_their_own_group(tmp_path):
    path = write_config(tmp_path, extra="[threat]\nkind = minus_grad\n"
                                        "num_attackers = 2\n")
    cfg = load_config(path)
    clients = {ds.client_id: ds
               for ds in build_scenario(dataclasses.replace(cfg.scenario,
                                                            seed=0))}
    groups = effective_groups(cfg, clients)
    assert groups[0] == groups[1] == cfg.scenario.num_groups
    assert groups[2] == clients[2].group_id


def test_attack_run_flags_attacker_clusters(tmp_path):
    path = tmp_path / "atk.ini"
    path.write_text(dedent("""\
        [scenario]
        kind = attack_iid
        num_clients = 8
        num_groups = 1
        train_per_client = 12
        test_per_client = 6
        num_classes = 3
        feature_dim = 6

        [model]
        kind = mlp-classifier

        [federation]
        participation = 0.5
        epochs = 1
        batch_size = 6
        learning_rate = 0.05
        rounds = 4
        cluster_rounds = 1

        [threat]
        kind = minus_grad
        num_attackers = 3
        """))
    cfg = load_config(path)
    result = run_experiment(cfg, seed=0, write_outputs=False)
    post = [r for r in result.metrics_rows if r[1] == "post"]
    assert post and all(r[7] in ("0", "1") for r in post)


def test_evaluate_clients_rejects_empty_test_split(tmp_path):
    cfg = load_config(write_config(tmp_path))
    x = np.zeros((4, 8))
    y = np.zeros(4, dtype=np.int64)
    broken = {0: ClientDataset(0, (x, y), (x[:0], y[:0]), 0)}
    params = init_params(cfg.model, init_rng(0))
    with pytest.raises(ConfigError, match="empty test"):
        evaluate_clients(cfg.model, params, broken)


def test_run_repeated_writes_per_seed_dirs_and_summary(tmp_path):
    cfg = load_config(write_config(tmp_path, rounds=3, cluster_rounds=1))
    results = run_repeated(cfg, base_seed=0, repeat=2,
                           out_root=tmp_path / "sweep")
    assert [r.seed for r in results] == [0, 1]
    assert (tmp_path / "sweep" / "seed_0" / "metrics.csv").exists()
    assert (tmp_path / "sweep" / "seed_1" / "metrics.csv").exists()
    lines = (tmp_path / "sweep" / "summary.csv").read_text().splitlines()
    assert lines[0] == "seed,pre_accuracy,post_accuracy,purity,n_clusters"
    assert len(lines) == 5  # header + 2 seeds + mean + std
    assert lines[3].startswith("mean,") and lines[4].startswith("std,")


# -------------------------------------------------------------------- cli --

def test_cli_runs_a_config(tmp_path, capsys):
    path = write_config(tmp_path, rounds=3, cluster_rounds=1)
    code = cli.main(["run", str(path), "--seed", "2",
                     "--out", str(tmp_path / "cli_out")])
    assert code == 0
    assert (tmp_path / "cli_out" / "metrics.csv").exists()
    assert "seed 2" in capsys.readouterr().out


def test_cli_reports_config_errors_with_exit_2(tmp_path, capsys):
    bad = write_config(tmp_path, "bad.ini", rounds=0)
    code = cli.main(["run", str(bad)])
    assert code == 2
    assert "rounds" in capsys.readouterr().err


def test_cli_missing_config_file_exits_2(tmp_path, capsys):
    code = cli.main(["run", str(tmp_path / "absent.ini")])
    assert code == 2
    assert "not found" in capsys.readouterr().err


def test_cli_repeat_flag(tmp_path, capsys):
    path = write_config(tmp_path, rounds=3, cluster_rounds=0)
    code = cli.main(["run", str(path), "--repeat", "2",
                     "--out", str(tmp_path / "rep")])
    assert code == 0
    assert (tmp_path / "rep" / "summary.csv").exists()

    code = cli.main(["run", str(path), "--repeat", "2", "--seed", "5",
                     "--out", str(tmp_path / "rep2")])
    assert code == 0
    assert (tmp_path / "rep2" / "seed_5").is_dir()
    assert (tmp_path / "rep2" / "seed_6").is_dir()
