"""
Pruebas de la interfaz de línea de comandos: códigos de salida, línea de error
JSON y el flujo completo sobre un corpus diminuto.
"""

import glob
import json
import os

import pytest
from click.testing import CliRunner

from app import __version__
from app.main import cli
from app.models.schemas import ClassifierSpec
from app.services.classifier_service import ClassifierService
from app.services.manifest_service import ManifestService
from app.utils.logging_config import setup_logging


def error_line(output):
    """Primera línea JSON de error en la salida."""
    for line in output.splitlines():
        if line.startswith('{"error"'):
            return json.loads(line)["error"]
    return None


@pytest.fixture
def runner():
    yield CliRunner()
    # Los handlers quedaron ligados al stderr capturado por el runner
    setup_logging()


@pytest.fixture
def dummy_inputs(tmp_path):
    """
    Archivos que existen para pasar las comprobaciones de click.
    """
    scene = tmp_path / "scene.yaml"
    weights = tmp_path / "clf.bin"
    scene.write_text("object: {}\n", encoding="utf-8")
    weights.write_bytes(b"not weights")
    return str(scene), str(weights)


class TestCliErrors:
    """
    Pruebas de los códigos de salida.
    """

    def test_help_and_version(self, runner):
        """
        Prueba --help y --version.
        """
        result = runner.invoke(cli, ["--help"])
        version = runner.invoke(cli, ["--version"])

        assert result.exit_code == 0
        for command in ("gen-corpus", "train", "saliency", "attack", "evaluate", "report", "sweep"):
            assert command in result.output
        assert version.exit_code == 0
        assert __version__ in version.output

    @pytest.mark.parametrize(
        "args",
        [
            ["--unknown"],
            ["gen-corpus", "--out", "x", "--objects", "1"],
            ["attack", "--epsilon", "0.1"],
            ["--threads", "0", "report", "--in", ".", "--out", "x"],
        ],
    )
    def test_usage_errors(self, runner, args):
        """
        Prueba que los errores de uso salen con código 2.
        """
        result = runner.invoke(cli, args)

        assert result.exit_code == 2

    @pytest.mark.parametrize(
        "extra",
        [
            ["--epsilon", "2.0"],
            ["--epsilon", "0.01", "--alpha", "0.05"],
            ["--epsilon", "0.1", "--restarts", "3"],
            ["--epsilon", "0.1", "--tau", "1.5"],
        ],
    )
    def test_invalid_attack_settings(self, runner, tmp_path, dummy_inputs, extra):
        """
        Prueba que parámetros de ataque inválidos salen con código 3 y una línea JSON.
        """
        scene, weights = dummy_inputs

        result = runner.invoke(
            cli, ["attack", "--scene", scene, "--weights", weights, "--out", str(tmp_path / "out")] + extra
        )

        assert result.exit_code == 3
        error = error_line(result.output)
        assert error["type"] == "config_error"
        assert error["exit_code"] == 3

    def test_corrupted_weights(self, runner, tmp_path, dummy_inputs):
        """
        Prueba que un archivo de pesos inválido sale con código 4.
        """
        scene, weights = dummy_inputs

        result = runner.invoke(
            cli, ["attack", "--scene", scene, "--weights", weights, "--epsilon", "0.1", "--out", str(tmp_path / "o")]
        )

        assert result.exit_code == 4
        assert error_line(result.output)["type"] == "checksum_mismatch"

    def test_bad_scene_config(self, runner, tmp_path, dummy_inputs):
        """
        Prueba que un documento de escena inválido sale con código 3.
        """
        scene, _ = dummy_inputs
        texture = tmp_path / "texture.png"
        texture.write_bytes(b"")
        weights = str(tmp_path / "real.bin")
        spec = ClassifierSpec.preset("compact", 2, 16)
        ClassifierService.save_weights(ClassifierService.init_model(spec, seed=0), weights)

        result = runner.invoke(
            cli,
            ["evaluate", "--scene", scene, "--weights", weights, "--texture", str(texture),
             "--renderer", "target", "--out", str(tmp_path / "eval.json")],
        )

        assert result.exit_code == 3
        assert error_line(result.output)["type"] == "config_error"
        assert not (tmp_path / "eval.json").exists()

    def test_report_without_reports(self, runner, tmp_path):
        """
        Prueba que un directorio sin informes es un fallo de ejecución.
        """
        result = runner.invoke(cli, ["report", "--in", str(tmp_path), "--out", str(tmp_path / "tables")])

        assert result.exit_code == 4
        assert error_line(result.output)["type"] == "runtime_error"


class TestCliFlow:
    """
    Flujo completo sobre un corpus de dos objetos a 16 px.
    """

    def test_full_pipeline(self, runner, tmp_path):
        """
        Prueba gen-corpus, train, saliency, attack, evaluate, report y sweep encadenados.
        """
        corpus = str(tmp_path / "corpus")
        weights = str(tmp_path / "clf.bin")
        runs = str(tmp_path / "runs")
        scene = os.path.join(corpus, "cube-00", "scene.yaml")

        # Corpus y clasificador
        result = runner.invoke(
            cli, ["gen-corpus", "--out", corpus, "--objects", "2", "--views", "2", "--resolution", "16",
                  "--texture-size", "8"],
        )
        assert result.exit_code == 0, result.output
        assert ManifestService.verify_manifest(os.path.join(corpus, "gen-corpus.manifest.json")) == []

        result = runner.invoke(
            cli, ["train", "--corpus", corpus, "--out", weights, "--preset", "compact", "--epochs", "1",
                  "--batch-size", "4", "--max-steps", "2", "--classifier-id", "clf-small"],
        )
        assert result.exit_code == 0, result.output
        assert os.path.exists(weights + ".manifest.json")

        # Saliencia y ataque
        result = runner.invoke(
            cli, ["saliency", "--scene", scene, "--weights", weights, "--tau", "0.5",
                  "--out", str(tmp_path / "saliency")],
        )
        assert result.exit_code == 0, result.output
        assert len(glob.glob(str(tmp_path / "saliency" / "*_mask.png"))) == 1

        result = runner.invoke(
            cli, ["--threads", "2", "attack", "--scene", scene, "--weights", weights, "--epsilon", "0.05",
                  "--alpha", "0.02", "--steps", "2", "--out", runs],
        )
        assert result.exit_code == 0, result.output
        reports = sorted(glob.glob(os.path.join(runs, "report_*.json")))
        assert [os.path.basename(p) for p in reports] == [
            "report_cube-00_surrogate_clf-small_eps0.05_taunone.json",
            "report_cube-00_target_clf-small_eps0.05_taunone.json",
        ]
        with open(reports[0], encoding="utf-8") as handle:
            surrogate = json.load(handle)
        assert surrogate["n_pct"] <= 0.05
        assert len(surrogate["predictions"]) == 2
        assert "wall_clock_seconds" not in surrogate

        result = runner.invoke(
            cli, ["attack", "--scene", scene, "--weights", weights, "--epsilon", "0.05", "--steps", "1",
                  "--view-batch", "3", "--out", str(tmp_path / "too_many_views")],
        )
        assert result.exit_code == 3
        assert error_line(result.output)["type"] == "config_error"

        result = runner.invoke(
            cli, ["attack", "--scene", scene, "--weights", weights, "--epsilon", "0.05", "--steps", "0",
                  "--out", str(tmp_path / "no_steps")],
        )
        assert result.exit_code == 2

        # Evaluación y tablas
        texture = os.path.join(runs, "adv_cube-00_clf-small_eps0.05_taunone.png")
        result = runner.invoke(
            cli, ["evaluate", "--scene", scene, "--weights", weights, "--texture", texture,
                  "--renderer", "target", "--out", str(tmp_path / "eval.json")],
        )
        assert result.exit_code == 0, result.output
        with open(tmp_path / "eval.json", encoding="utf-8") as handle:
            evaluation = json.load(handle)
        assert evaluation["renderer"] == "target"
        assert len(evaluation["predictions"]) == 2

        result = runner.invoke(cli, ["report", "--in", runs, "--out", str(tmp_path / "tables")])
        assert result.exit_code == 0, result.output
        assert sorted(os.listdir(tmp_path / "tables")) == [
            "report.manifest.json",
            "scatter_cube-00_clf-small_eps0.05_taunone.csv",
            "table_cube-00_clf-small_eps0.05_taunone.csv",
            "table_long_cube-00_clf-small_eps0.05_taunone.csv",
        ]
        with open(tmp_path / "tables" / "table_cube-00_clf-small_eps0.05_taunone.csv", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
        assert lines[0] == "renderer,classifier_id,epsilon,tau,cube-00,average"
        assert [line.split(",")[0] for line in lines[1:]] == ["surrogate", "target"]

        # Barrido
        result = runner.invoke(
            cli, ["sweep", "--scene", scene, "--weights", weights, "--epsilons", "0.05,0.1",
                  "--taus", "none,0.5", "--steps", "1", "--no-transfer", "--out", str(tmp_path / "sweep")],
        )
        assert result.exit_code == 0, result.output
        assert len(glob.glob(str(tmp_path / "sweep" / "report_*.json"))) == 4
        sweep_table = tmp_path / "sweep" / "table_cube-00_clf-small_eps0.05-0.1_taunone-0.5.csv"
        with open(sweep_table, encoding="utf-8") as handle:
            assert len(handle.read().splitlines()) == 5

        # Salidas existentes sin --force
        result = runner.invoke(
            cli, ["gen-corpus", "--out", corpus, "--objects", "2", "--views", "2", "--resolution", "16",
                  "--texture-size", "8"],
        )
        assert result.exit_code == 4
        assert error_line(result.output)["type"] == "output_exists"

    def test_attack_is_reproducible(self, runner, tmp_path):
        """
        Prueba que repetir un ataque con --force produce los mismos bytes.
        """
        corpus = str(tmp_path / "corpus")
        weights = str(tmp_path / "clf.bin")
        scene = os.path.join(corpus, "uv-sphere-01", "scene.yaml")
        runner.invoke(cli, ["gen-corpus", "--out", corpus, "--objects", "2", "--views", "2",
                            "--resolution", "16", "--texture-size", "8"])
        runner.invoke(cli, ["train", "--corpus", corpus, "--out", weights, "--preset", "compact",
                            "--epochs", "1", "--max-steps", "1"])
        args = ["attack", "--scene", scene, "--weights", weights, "--epsilon", "0.1", "--alpha", "0.05",
                "--steps", "2", "--random-start", "--seed", "3", "--no-transfer", "--out", str(tmp_path / "runs")]

        first = runner.invoke(cli, args)
        texture = glob.glob(str(tmp_path / "runs" / "adv_*.png"))[0]
        with open(texture, "rb") as handle:
            before = handle.read()
        second = runner.invoke(cli, args + ["--force"])

        assert first.exit_code == 0, first.output
        assert second.exit_code == 0, second.output
        with open(texture, "rb") as handle:
            assert handle.read() == before
