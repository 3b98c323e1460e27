import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from spatsmc.cli import main


def run_cli(*args):
    return main(list(args))


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture
def bm_cfg(tmp_path):
    def make(**overrides):
        cfg = {"model": {"name": "bm", "U": 3, "N": 5}, "seed": 11}
        cfg.update(overrides)
        return write_cfg(tmp_path / "cfg.json", cfg)
    return make


class TestValidation:
    def test_all_violations_reported(self, bm_cfg, tmp_path, capsys):
        cfg = bm_cfg(model={"name": "nope"}, method="girf",
                     options={"Np": 10})
        code = run_cli("filter", "--config", cfg, "--out",
                       str(tmp_path / "o.csv"))
        captured = capsys.readouterr().err
        assert code == 2
        assert "model.name" in captured
        assert "options.Ninter" in captured
        assert "options.Nguide" in captured
        assert "options.Lookahead" in captured

    def test_missing_lookahead_rejected_before_compute(self, bm_cfg,
                                                       tmp_path):
        cfg = bm_cfg(method="girf", options={"Np": 10, "Ninter": 2,
                                             "Nguide": 5})
        code = run_cli("filter", "--config", cfg, "--out",
                       str(tmp_path / "o.csv"))
        assert code == 2
        assert not (tmp_path / "o.csv").exists()

    def test_bpfilter_needs_exactly_one_block_spec(self, bm_cfg, tmp_path,
                                                   capsys):
        cfg = bm_cfg(method="bpfilter", options={"Np": 10})
        assert run_cli("filter", "--config", cfg, "--out",
                       str(tmp_path / "o.csv")) == 2
        assert "block_size" in capsys.readouterr().err

    def test_search_requires_rw_for_every_parameter(self, bm_cfg, tmp_path,
                                                    capsys):
        cfg = bm_cfg(method="ienkf",
                     options={"Nenkf": 2, "Np": 50, "cooling": 0.5,
                              "rw_sd": {"sigma": 0.02}})
        code = run_cli("search", "--config", cfg, "--out", str(tmp_path / "s"))
        assert code == 2
        assert "every model parameter" in capsys.readouterr().err

    def test_mcap_rejects_thin_profile(self, tmp_path, capsys):
        prof = tmp_path / "p.csv"
        pd.DataFrame({"rho": [0.1, 0.2, 0.3], "loglik": [0, 1, 0]}).to_csv(
            prof, index=False)
        cfg = write_cfg(tmp_path / "m.json",
                        {"mcap": {"profile_csv": str(prof),
                                  "parameter": "rho"}})
        assert run_cli("mcap", "--config", cfg, "--out",
                       str(tmp_path / "mc.csv")) == 2
        assert "5 distinct" in capsys.readouterr().err


class TestSimulate:
    def test_deterministic_outputs(self, bm_cfg, tmp_path):
        cfg = bm_cfg(nsim=1)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert run_cli("simulate", "--config", cfg, "--out", str(out1)) == 0
        assert run_cli("simulate", "--config", cfg, "--out", str(out2)) == 0
        assert (out1 / "states.csv").read_bytes() == \
            (out2 / "states.csv").read_bytes()
        assert (out1 / "obs.csv").read_bytes() == (out2 / "obs.csv").read_bytes()

    def test_replicates_write_suffixed_files(self, bm_cfg, tmp_path):
        cfg = bm_cfg(nsim=3)
        out = tmp_path / "sims"
        assert run_cli("simulate", "--config", cfg, "--out", str(out)) == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["obs_001.csv", "obs_002.csv", "obs_003.csv",
                         "states_001.csv", "states_002.csv",
                         "states_003.csv"]

    def test_long_format_columns(self, bm_cfg, tmp_path):
        cfg = bm_cfg()
        out = tmp_path / "sim"
        run_cli("simulate", "--config", cfg, "--out", str(out))
        states = pd.read_csv(out / "states.csv")
        assert list(states.columns) == ["time", "unit", "variable", "value"]
        assert set(states["unit"]) == {"unit1", "unit2", "unit3"}
        # N+1 rows per (unit, variable): t0 plus 5 observation times
        assert len(states) == 6 * 3 * 1


class TestFilter:
    def test_row_counts_and_aggregate(self, bm_cfg, tmp_path):
        cfg = bm_cfg(method="enkf", options={"Np": 100}, replicates=4)
        out = tmp_path / "r.csv"
        assert run_cli("filter", "--config", cfg, "--out", str(out)) == 0
        frame = pd.read_csv(out)
        assert len(frame) == 5  # 4 replicates + aggregate
        agg = frame.iloc[-1]
        assert agg["run_id"].endswith("aggregate")
        assert np.isfinite(agg["loglik.se"])
        reps = frame.iloc[:4]
        assert reps["loglik.se"].isna().all()
        for col in ("run_id", "method", "U", "rep", "rho", "sigma", "tau",
                    "loglik", "loglik.se", "wall_time", "n_failures"):
            assert col in frame.columns

    def test_sweep_layout(self, bm_cfg, tmp_path):
        cfg = bm_cfg(model={"name": "bm", "U": [2, 3], "N": 4},
                     method=["pfilter", "enkf"],
                     options={"Np": 80}, replicates=2)
        out = tmp_path / "sweep.csv"
        assert run_cli("filter", "--config", cfg, "--out", str(out)) == 0
        frame = pd.read_csv(out)
        per_rep = frame[frame["rep"] > 0]
        assert len(per_rep) == 2 * 2 * 2  # U values x methods x replicates
        assert set(per_rep["method"]) == {"pfilter", "enkf"}
        assert set(per_rep["U"]) == {2, 3}
        assert "exact_kf_loglik" in frame.columns
        assert per_rep["exact_kf_loglik"].notna().all()

    def test_determinism_modulo_wall_time(self, bm_cfg, tmp_path):
        cfg = bm_cfg(method="pfilter", options={"Np": 60}, replicates=3)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("filter", "--config", cfg, "--out", str(a))
        run_cli("filter", "--config", cfg, "--out", str(b))
        fa = pd.read_csv(a).drop(columns="wall_time")
        fb = pd.read_csv(b).drop(columns="wall_time")
        assert fa.equals(fb)

    def test_thread_count_does_not_change_results(self, bm_cfg, tmp_path):
        cfg1 = bm_cfg(method="enkf", options={"Np": 80}, replicates=4,
                      threads=1)
        a = tmp_path / "t1.csv"
        run_cli("filter", "--config", cfg1, "--out", str(a))
        cfg4 = bm_cfg(method="enkf", options={"Np": 80}, replicates=4,
                      threads=4)
        b = tmp_path / "t4.csv"
        run_cli("filter", "--config", cfg4, "--out", str(b))
        fa = pd.read_csv(a).drop(columns="wall_time")
        fb = pd.read_csv(b).drop(columns="wall_time")
        assert fa.equals(fb)


class TestSearch:
    def _cfg(self, bm_cfg, **kw):
        rw = {"rho": 0.02, "sigma": 0.02, "tau": 0.0,
              "X1_0": 0.0, "X2_0": 0.0, "X3_0": 0.0}
        return bm_cfg(method="igirf",
                      options={"Ngirf": 3, "Np": 60, "Ninter": 2,
                               "Nguide": 5, "Lookahead": 1,
                               "cooling": 0.5, "rw_sd": rw}, **kw)

    def test_trace_rows_match_iterations(self, bm_cfg, tmp_path):
        out = tmp_path / "searchout"
        assert run_cli("search", "--config", self._cfg(bm_cfg),
                       "--out", str(out)) == 0
        trace = pd.read_csv(out / "trace.csv")
        assert len(trace) == 3
        assert {"iteration", "loglik", "rho", "sigma"} <= set(trace.columns)
        final = pd.read_csv(out / "final_params.csv")
        assert len(final) == 1

    def test_zero_rw_parameters_stay_constant(self, bm_cfg, tmp_path):
        out = tmp_path / "searchout2"
        run_cli("search", "--config", self._cfg(bm_cfg), "--out", str(out))
        trace = pd.read_csv(out / "trace.csv")
        assert trace["X1_0"].nunique() == 1  # IVP with zero sd never moves
        assert trace["tau"].nunique() == 1
        assert trace["rho"].nunique() == 3  # perturbed parameter moves


class TestProfileAndMcap:
    def test_end_to_end(self, tmp_path):
        cfg = {
            "model": {"name": "bm", "U": 2, "N": 4},
            "method": "ienkf",
            "options": {"Nenkf": 2, "Np": 60, "cooling": 0.5,
                        "rw_sd": {"sigma": 0.05}},
            "profile": {"parameter": "rho",
                        "grid": {"from": 0.2, "to": 0.5, "length": 5},
                        "lower": {"sigma": 0.7}, "upper": {"sigma": 1.4},
                        "nprof": 2,
                        "eval": {"method": "enkf", "Np": 100,
                                 "replicates": 3}},
            "seed": 5,
        }
        path = write_cfg(tmp_path / "p.json", cfg)
        out = tmp_path / "prof.csv"
        assert run_cli("profile", "--config", path, "--out", str(out)) == 0
        prof = pd.read_csv(out)
        assert len(prof) == 10  # grid x nprof
        assert {"rho", "sigma", "loglik", "loglik.se"} <= set(prof.columns)

        mcfg = write_cfg(tmp_path / "m.json",
                         {"mcap": {"profile_csv": str(out),
                                   "parameter": "rho"}})
        mout = tmp_path / "mcap.csv"
        assert run_cli("mcap", "--config", mcfg, "--out", str(mout)) == 0
        mc = pd.read_csv(mout)
        assert {"parameter", "smoothed_loglik", "mle", "cutoff", "ci_lo",
                "ci_hi", "level"} <= set(mc.columns)
        assert mc["ci_lo"].iloc[0] <= mc["ci_hi"].iloc[0]

    def test_profile_threads_invariant(self, tmp_path):
        cfg = {
            "model": {"name": "bm", "U": 2, "N": 3},
            "method": "ienkf",
            "options": {"Nenkf": 1, "Np": 40, "cooling": 0.5,
                        "rw_sd": {"sigma": 0.05}},
            "profile": {"parameter": "rho", "grid": [0.3, 0.4],
                        "lower": {"sigma": 0.8}, "upper": {"sigma": 1.2},
                        "nprof": 2,
                        "eval": {"method": "enkf", "Np": 50,
                                 "replicates": 2}},
            "seed": 6,
        }
        p1 = write_cfg(tmp_path / "p1.json", {**cfg, "threads": 1})
        p2 = write_cfg(tmp_path / "p2.json", {**cfg, "threads": 3})
        o1, o2 = tmp_path / "o1.csv", tmp_path / "o2.csv"
        assert run_cli("profile", "--config", p1, "--out", str(o1)) == 0
        assert run_cli("profile", "--config", p2, "--out", str(o2)) == 0
        assert o1.read_bytes() == o2.read_bytes()


class TestProfileRegression:
    def test_coupling_interval_contains_truth(self, tmp_path):
        # seeded end-to-end regression: profile the coupling parameter of a
        # bm model over a grid bracketing the truth (0.4), smooth with mcap,
        # and check the interval contains it
        cfg = {
            "model": {"name": "bm", "U": 6, "N": 30},
            "method": "ienkf",
            "options": {"Nenkf": 2, "Np": 100, "cooling": 0.5,
                        "rw_sd": {"sigma": 0.02, "tau": 0.02}},
            "profile": {"parameter": "rho",
                        "grid": {"from": 0.1, "to": 0.7, "length": 7},
                        "lower": {"sigma": 0.9, "tau": 0.9},
                        "upper": {"sigma": 1.1, "tau": 1.1},
                        "nprof": 2,
                        "eval": {"method": "enkf", "Np": 500,
                                 "replicates": 5}},
            "seed": 31,
            "threads": 2,
        }
        path = write_cfg(tmp_path / "prof.json", cfg)
        out = tmp_path / "prof.csv"
        assert run_cli("profile", "--config", path, "--out", str(out)) == 0
        mcfg = write_cfg(tmp_path / "mc.json",
                         {"mcap": {"profile_csv": str(out),
                                   "parameter": "rho"}})
        mout = tmp_path / "mcap.csv"
        assert run_cli("mcap", "--config", mcfg, "--out", str(mout)) == 0
        mc = pd.read_csv(mout)
        lo, hi = mc["ci_lo"].iloc[0], mc["ci_hi"].iloc[0]
        assert lo < 0.4 < hi
        assert hi - lo < 0.6  # and it is informative, not the whole grid


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"model": {"name": "bm", "U": 2, "N": 3},
                                   "seed": 1}))
        out = tmp_path / "simdir"
        proc = subprocess.run(
            [sys.executable, "-m", "spatsmc.cli", "simulate",
             "--config", str(cfg), "--out", str(out)],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert (out / "states.csv").exists()
