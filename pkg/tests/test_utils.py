"""
Pruebas de las utilidades: convolución, mapa paralelo, escritura atómica y logging.
"""

import logging
import os
import threading
import time

import numpy as np
import pytest

from app.exceptions import OutputExists
from app.utils.conv_ops import col2im, conv_backward, conv_forward, im2col, output_size
from app.utils.files import atomic_write, atomic_write_text, check_writable, file_digest, staged_path
from app.utils.logging_config import get_logger, setup_logging
from app.utils.parallel import ordered_map


class TestConvOps:
    """
    Pruebas de los núcleos de convolución.
    """

    @pytest.mark.parametrize("kernel, stride, pad", [(3, 2, 1), (3, 1, 1), (2, 2, 0)])
    def test_col2im_is_adjoint(self, kernel, stride, pad):
        """
        Prueba <im2col(x), y> = <x, col2im(y)>.
        """
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 3, 7, 6))
        cols, (ho, wo) = im2col(x, kernel, stride, pad)
        y = rng.normal(size=cols.shape)

        assert (ho, wo) == (output_size(7, kernel, stride, pad), output_size(6, kernel, stride, pad))
        assert np.sum(cols * y) == pytest.approx(np.sum(x * col2im(y, x.shape, kernel, stride, pad)), rel=1e-12)

    def test_conv_forward_matches_direct_sum(self):
        """
        Prueba la convolución contra una suma directa en un pixel.
        """
        rng = np.random.default_rng(1)
        x = rng.normal(size=(1, 2, 5, 5))
        weight = rng.normal(size=(4, 2, 3, 3))
        bias = rng.normal(size=4)

        out, _ = conv_forward(x, weight, bias, stride=2, pad=1)

        assert out.shape == (1, 4, 3, 3)
        # Salida (1, 1) lee la ventana centrada en la entrada (2, 2)
        expected = np.sum(weight[3] * x[0, :, 1:4, 1:4]) + bias[3]
        assert out[0, 3, 1, 1] == pytest.approx(expected)

    def test_conv_backward_bias_and_skip_input(self):
        """
        Prueba el gradiente del sesgo y que need_input=False omite dx.
        """
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 2, 4, 4))
        weight = rng.normal(size=(3, 2, 3, 3))
        out, cols = conv_forward(x, weight, np.zeros(3), stride=1, pad=1)
        grad_out = np.ones_like(out)

        d_x, d_weight, d_bias = conv_backward(grad_out, cols, x.shape, weight, 1, 1, need_input=False)

        assert d_x is None
        assert d_weight.shape == weight.shape
        assert np.allclose(d_bias, 2 * 16)


class TestParallel:
    """
    Pruebas del mapa ordenado.
    """

    @pytest.mark.parametrize("threads", [1, 3, 8])
    def test_ordered_map_keeps_order(self, threads):
        """
        Prueba que los resultados siguen el orden de entrada aunque terminen desordenados.
        """
        def slow_square(i):
            time.sleep(0.001 * (5 - i))
            return i * i

        assert ordered_map(slow_square, range(5), threads) == [0, 1, 4, 9, 16]

    def test_ordered_map_uses_threads(self):
        """
        Prueba que con varios hilos el trabajo sale del hilo principal.
        """
        names = ordered_map(lambda _: threading.current_thread().name, range(4), threads=2)

        assert all(name != threading.main_thread().name for name in names)
        assert ordered_map(lambda _: threading.current_thread().name, range(4), threads=1) == [
            threading.main_thread().name
        ] * 4


class TestFiles:
    """
    Pruebas de escritura atómica.
    """

    def test_check_writable(self, tmp_path):
        """
        Prueba la negativa a sobrescribir salvo con force.
        """
        path = tmp_path / "out.txt"
        check_writable(str(path))
        path.write_text("x", encoding="utf-8")

        with pytest.raises(OutputExists) as exc_info:
            check_writable(str(path))

        assert exc_info.value.exit_code == 4
        check_writable(str(path), force=True)

    def test_staged_path_cleans_up_on_error(self, tmp_path):
        """
        Prueba que un fallo deja el destino intacto y sin archivos temporales.
        """
        path = tmp_path / "out.txt"

        with pytest.raises(RuntimeError):
            with staged_path(str(path)) as temp:
                with open(temp, "w", encoding="utf-8") as handle:
                    handle.write("partial")
                raise RuntimeError("boom")

        assert os.listdir(tmp_path) == []

    def test_atomic_write_and_digest(self, tmp_path):
        """
        Prueba la escritura completa y el digest SHA-256.
        """
        path = tmp_path / "nested" / "out.txt"

        atomic_write_text(str(path), "abc")

        assert path.read_text(encoding="utf-8") == "abc"
        assert file_digest(str(path)) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        assert os.listdir(tmp_path / "nested") == ["out.txt"]

    def test_atomic_write_force_replaces_bytes(self, tmp_path):
        """
        Prueba que force sustituye el contenido binario existente.
        """
        path = tmp_path / "out.bin"
        atomic_write(str(path), b"\x00\x01")

        with pytest.raises(OutputExists):
            atomic_write(str(path), b"\x02")
        atomic_write(str(path), b"\x02", force=True)

        assert path.read_bytes() == b"\x02"


class TestLogging:
    """
    Pruebas de la configuración de logging.
    """

    def teardown_method(self):
        setup_logging()

    def test_log_dir_creates_module_files(self, tmp_path):
        """
        Prueba que con log_dir cada módulo escribe su propio archivo.
        """
        log_dir = tmp_path / "logs"
        logger = get_logger("utils_test_module")

        setup_logging(logging.DEBUG, str(log_dir))
        logger.debug("hola")
        for handler in logger.handlers:
            handler.flush()

        assert logger.level == logging.DEBUG
        assert "hola" in (log_dir / "utils_test_module.log").read_text(encoding="utf-8")

    def test_get_logger_single_console_handler(self):
        """
        Prueba que pedir el mismo logger dos veces no duplica handlers.
        """
        first = get_logger("utils_test_twice")
        second = get_logger("utils_test_twice")

        assert first is second
        assert len(first.handlers) == 1
        assert first.propagate is False
