"""Config parsing: defaults, dotted keys, sweeps, and line-precise errors."""

import pytest

from hetbench.config import ExperimentConfig, apply_overrides, parse_config_file, parse_config_text
from hetbench.errors import ConfigError


class TestDefaults:
    def test_empty_text_gives_benchmark_defaults(self):
        cfg = parse_config_text("")
        assert cfg.num_clients == 10
        assert cfg.rounds == 50
        assert cfg.local_epochs == 10
        assert cfg.batch_size == 64
        assert cfg.learning_rate == 0.01
        assert cfg.momentum == 0.9
        assert cfg.hidden == (64,)
        assert cfg.schemes == ("pfedjs",)
        assert cfg.partitions == ("iid",)
        assert cfg.seeds == (0,)
        assert cfg.eval_split == "local"
        assert cfg.out_dir == "results"

    def test_comments_and_blank_lines_ignored(self):
        text = "\n# a comment\n  \nrounds = 20  # trailing note\n\n"
        cfg = parse_config_text(text)
        assert cfg.rounds == 20

    def test_group_defaults(self):
        cfg = parse_config_text("")
        assert cfg.race.num_tables == 50
        assert cfg.race.sample_size == 6
        assert cfg.race.fine_tune_epochs == 5
        assert cfg.sv.top_k == 3
        assert cfg.sv.ema_eta == 0.5
        assert cfg.graph.lam == 0.3
        assert cfg.ce.steps == 2000
        assert cfg.js.q2 == 5.0


class TestDottedKeys:
    def test_race_keys_map_to_sketch_fields(self):
        cfg = parse_config_text(
            "race.R = 80\nrace.bits = 6\nrace.gamma = 2.5\nrace.K = 4\nrace.finetune = 3\n"
        )
        assert cfg.race.num_tables == 80
        assert cfg.race.bits == 6
        assert cfg.race.label_scale == 2.5
        assert cfg.race.sample_size == 4
        assert cfg.race.fine_tune_epochs == 3

    def test_js_and_graph_and_sv_keys(self):
        cfg = parse_config_text(
            "js.space = joint\njs.bins = 12\ngraph.lambda = 0.7\nsv.K = 5\nsv.eta = 0.25\n"
        )
        assert cfg.js.space == "joint"
        assert cfg.js.feature_bins == 12
        assert cfg.graph.lam == 0.7
        assert cfg.sv.top_k == 5
        assert cfg.sv.ema_eta == 0.25

    def test_collab_holdout_key(self):
        cfg = parse_config_text("collab.holdout = 0.4\n")
        assert cfg.collab.holdout_fraction == 0.4

    def test_data_keys(self):
        cfg = parse_config_text("data.classes = 4\ndata.dim = 8\ndata.per_class = 64\n")
        assert cfg.data.classes == 4
        assert cfg.data.dim == 8
        assert cfg.data.per_class == 64


class TestSweepLists:
    def test_scheme_list(self):
        cfg = parse_config_text("scheme = pfedjs, race, fedavg\n")
        assert cfg.schemes == ("pfedjs", "race", "fedavg")

    def test_partition_list(self):
        cfg = parse_config_text("partition = iid, dir0.5, c2\n")
        assert cfg.partitions == ("iid", "dir0.5", "c2")

    def test_seed_list(self):
        cfg = parse_config_text("seed = 1,2,3\n")
        assert cfg.seeds == (1, 2, 3)

    def test_hidden_list_and_empty(self):
        assert parse_config_text("hidden = 64, 32\n").hidden == (64, 32)
        assert parse_config_text("hidden = none\n").hidden == ()
        assert parse_config_text("hidden =\n").hidden == ()


class TestLineErrors:
    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match="line 2: unknown key 'bogus'"):
            parse_config_text("rounds = 5\nbogus = 3\n")

    def test_duplicate_key_reports_both_lines(self):
        with pytest.raises(ConfigError, match=r"line 3: duplicate key 'rounds' \(first set on line 1\)"):
            parse_config_text("rounds = 5\nseed = 1\nrounds = 6\n")

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="line 1: expected 'key = value'"):
            parse_config_text("rounds 50\n")

    def test_negative_rounds_rejected(self):
        with pytest.raises(ConfigError, match="line 1: rounds"):
            parse_config_text("rounds = -1\n")

    def test_non_integer_rejected(self):
        with pytest.raises(ConfigError, match="expected an integer"):
            parse_config_text("rounds = soon\n")

    def test_momentum_range(self):
        with pytest.raises(ConfigError, match="momentum"):
            parse_config_text("momentum = 1.0\n")

    def test_eval_choice(self):
        with pytest.raises(ConfigError, match="expected one of local/global"):
            parse_config_text("eval = sideways\n")

    def test_unknown_scheme_in_list(self):
        with pytest.raises(ConfigError, match="line 1: scheme"):
            parse_config_text("scheme = pfedjs, mystery\n")

    def test_race_bits_bounded(self):
        with pytest.raises(ConfigError, match="bits"):
            parse_config_text("race.bits = 25\n")

    def test_too_many_hidden_layers(self):
        with pytest.raises(ConfigError, match="hidden"):
            parse_config_text("hidden = 8,8,8,8\n")


class TestCrossValidation:
    def test_bad_partition_text(self):
        with pytest.raises(ConfigError, match="partition 'zebra3'"):
            parse_config_text("partition = zebra3\n")

    def test_sv_top_k_must_fit_cohort(self):
        text = "scheme = pfedsv\nnum_clients = 4\nsv.K = 5\n"
        with pytest.raises(ConfigError, match="sv.K"):
            parse_config_text(text)
        # without pfedsv in the sweep the same K is allowed
        parse_config_text("scheme = pfedjs\nnum_clients = 4\nsv.K = 5\n")

    def test_race_sample_must_fit_cohort(self):
        with pytest.raises(ConfigError, match="race.K"):
            parse_config_text("scheme = race\nnum_clients = 4\nrace.K = 6\n")
        parse_config_text("scheme = fedavg\nnum_clients = 4\nrace.K = 6\n")

    def test_idx_source_needs_paths(self):
        with pytest.raises(ConfigError, match="idx requires"):
            parse_config_text("data.source = idx\n")


class TestFileLoading:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("rounds = 7\nseed = 4,5\n", encoding="utf-8")
        cfg = parse_config_file(str(path))
        assert cfg.rounds == 7
        assert cfg.seeds == (4, 5)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read config"):
            parse_config_file(str(tmp_path / "absent.cfg"))


class TestOverrides:
    def test_flags_win_over_file_values(self):
        cfg = parse_config_text("scheme = pfedjs,fedavg\npartition = iid,dir0.5\nseed = 1,2,3\n")
        cfg = apply_overrides(cfg, scheme="race", partition="c1", seeds=[1], out="elsewhere")
        assert cfg.schemes == ("race",)
        assert cfg.partitions == ("c1",)
        assert cfg.seeds == (1,)
        assert cfg.out_dir == "elsewhere"

    def test_no_overrides_returns_config_unchanged(self):
        cfg = ExperimentConfig()
        assert apply_overrides(cfg) is cfg

    def test_unknown_scheme_override(self):
        with pytest.raises(ConfigError, match="unknown scheme"):
            apply_overrides(ExperimentConfig(), scheme="mean-teacher")

    def test_bad_partition_override(self):
        with pytest.raises(ConfigError, match="partition"):
            apply_overrides(ExperimentConfig(), partition="qty")

    def test_bad_seed_override(self):
        with pytest.raises(ConfigError, match="seeds"):
            apply_overrides(ExperimentConfig(), seeds=[-1])
