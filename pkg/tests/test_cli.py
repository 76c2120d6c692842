import json

import pytest

from engagement_games.cli import main
from engagement_games.data import load_population
from engagement_games.game import StrategyProfile, save_profile


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def users_file(tmp_path):
    path = tmp_path / "users.csv"
    assert main(["gen-users", "--users", "50", "--dim", "3", "--seed", "4", "--out", str(path)]) == 0
    return path


class TestCli:
    def test_gen_users(self, tmp_path, capsys):
        code, out, _ = run(capsys, "gen-users", "--dist", "skewed", "--users", 20, "--dim", 4, "--out", tmp_path / "u.csv")
        assert code == 0 and json.loads(out)["K"] == 20
        assert load_population(tmp_path / "u.csv").d == 4

    def test_nmf(self, tmp_path, capsys):
        r = tmp_path / "r.csv"
        r.write_text("user,item,rating\n" + "".join(f"u{u},i{i},{1 + (u * i) % 5}\n" for u in range(6) for i in range(5)))
        code, out, _ = run(capsys, "nmf", "--ratings", r, "--dim", 2, "--iters", 20, "--out", tmp_path / "e.csv",
                           "--log", tmp_path / "log.csv")
        info = json.loads(out)
        assert code == 0 and info["users"] == 6 and info["items"] == 5 and info["strictly_positive"]
        assert len((tmp_path / "log.csv").read_text().splitlines()) == 22

    def test_run_and_verify(self, tmp_path, users_file, capsys):
        code, out, _ = run(capsys, "run", "--users", users_file, "--producers", 4, "--rule", "softmax", "--tau", 0.5,
                           "--out", tmp_path / "res.json")
        res = json.loads(out)
        assert code == 0 and res["converged"]
        saved = json.loads((tmp_path / "res.json").read_text())
        assert saved["basis"] == res["basis"]
        save_profile(StrategyProfile.from_basis(res["basis"], 3), tmp_path / "p.json")
        code, out, _ = run(capsys, "verify", "--users", users_file, "--profile", tmp_path / "p.json",
                           "--rule", "softmax", "--tau", 0.5)
        assert code == 0 and json.loads(out)["is_equilibrium"] is True

    def test_single_minded(self, capsys):
        code, out, _ = run(capsys, "single-minded", "--m", "2,1", "--counts", "0,3")
        assert code == 0 and json.loads(out)["is_equilibrium"] is False
        code, out, _ = run(capsys, "single-minded", "--m", "2,1,1", "--construct", 4)
        assert json.loads(out)["counts"] == [2, 1, 1]

    def test_sweep_and_plot(self, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"users": {"dist": "uniform", "K": 30}, "producers": [2], "dims": [3],
                                    "rules": ["linear", 1.0], "embed_seeds": [17], "runs": 1}))
        code, out, _ = run(capsys, "sweep", "--spec", spec, "--out", tmp_path / "s")
        info = json.loads(out)
        assert code == 0 and len(info["convergence"]) == 2
        code, out, _ = run(capsys, "plot", "--results", info["results"], "--out", tmp_path / "charts")
        assert code == 0 and json.loads(out)["charts"]

    @pytest.mark.parametrize(
        "argv",
        [
            ["run", "--users", "/nonexistent.csv", "--producers", "2"],
            ["single-minded", "--m", "1,0", "--counts", "1,1"],
            ["run", "--users", "USERS", "--producers", "2", "--rule", "softmax"],
        ],
    )
    def test_errors(self, argv, users_file, capsys):
        argv = [str(users_file) if a == "USERS" else a for a in argv]
        code, out, err = run(capsys, *argv)
        assert code != 0 and out == ""
        line = json.loads(err.strip().splitlines()[-1])
        assert set(line) == {"error", "message"}
