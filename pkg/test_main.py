import json
import logging
import os

import pytest

from main import EXIT_CAUSALITY, EXIT_INPUT, EXIT_OK, EXIT_STABILITY, main

# Configure logging
logging.basicConfig(
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    level=logging.DEBUG
)
logger = logging.getLogger(__name__)

SYSTEMS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "systems")


def shipped(name: str) -> str:
    return os.path.join(SYSTEMS_DIR, name)


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    logger.info(f"delaynorm {' '.join(argv)} -> {code}")
    return code, out


def csv_rows(text: str):
    lines = text.strip().splitlines()
    return lines[0].split(","), [[float(value) for value in line.split(",")] for line in lines[1:]]


def write_document(directory, name: str, document) -> str:
    path = os.path.join(str(directory), name)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(document if isinstance(document, str) else json.dumps(document))
    return path


def test_norm_first_order(capsys):
    """Test the norm document of 1/(s+1)"""
    code, out = run(capsys, "norm", shipped("first_order.json"))
    assert code == EXIT_OK
    document = json.loads(out)
    assert document["strong_norm"] == pytest.approx(1.0, abs=1e-12)
    assert document["frequency"] == pytest.approx(0.0, abs=1e-8)
    assert document["asymptotic_norm"] == 0.0 and document["theta_star"] == []
    assert document["config"]["N"] == 20


def test_norm_tsh_reports_infinite_frequency(capsys):
    """Test that T_sh reaches its strong norm only asymptotically"""
    code, out = run(capsys, "norm", shipped("tsh.json"))
    assert code == EXIT_OK
    document = json.loads(out)
    assert document["frequency"] == "inf"
    assert float(document["strong_norm"]) == pytest.approx(4.0, abs=1e-6)
    assert document["standard_peak"] == pytest.approx(2.5788, abs=1e-3)


def test_norm_output_is_deterministic(capsys):
    """Test that two runs print the same document"""
    _, first = run(capsys, "norm", shipped("one_delay.json"), "--N", "15")
    _, second = run(capsys, "norm", shipped("one_delay.json"), "--N", "15")
    assert first == second
    assert json.loads(first)["config"]["N"] == 15


def test_extrema_command(capsys):
    """Test the extrema document of the one-delay system"""
    code, out = run(capsys, "extrema", shipped("one_delay.json"))
    assert code == EXIT_OK
    document = json.loads(out)
    kinds = sorted(entry["kind"] for entry in document["extrema"])
    assert kinds == ["maximum", "minimum"], f"Unexpected extrema {document['extrema']}"
    assert any(entry["omega"] == 0.0 for entry in document["predicted"])


def test_bode_first_order(capsys):
    """Test the magnitude CSV of 1/(s+1)"""
    code, out = run(capsys, "bode", shipped("first_order.json"), "--wmin", "0", "--wmax", "1", "--points", "2")
    assert code == EXIT_OK
    header, rows = csv_rows(out)
    assert header == ["omega", "magnitude"]
    assert rows[0] == [0.0, 1.0]
    assert rows[1][0] == 1.0 and rows[1][1] == pytest.approx(0.7071067811865476, rel=1e-15)


def test_bode_tsh_with_asymptotic_column(capsys):
    """Test the T_sh magnitude at 0 and the asymptotic column on a log grid"""
    code, out = run(capsys, "bode", shipped("tsh.json"), "--wmin", "0", "--wmax", "10", "--points", "3")
    assert code == EXIT_OK
    _, rows = csv_rows(out)
    assert rows[0][1] == pytest.approx(1.8666666666666667, rel=1e-14)

    code, out = run(capsys, "bode", shipped("tsh.json"), "--wmin", "1e-2", "--wmax", "1e6", "--points", "9",
                    "--log", "--asymptotic")
    assert code == EXIT_OK
    header, rows = csv_rows(out)
    assert header == ["omega", "magnitude", "asymptotic"]
    assert len(rows) == 9 and rows[-1][0] == pytest.approx(1e6)
    assert all(row[2] <= 4.0 + 1e-8 for row in rows)
    assert abs(rows[-1][1] - rows[-1][2]) < 1e-3


def test_convert_is_idempotent(capsys, tmp_path):
    """Test that converting a converted file reproduces it"""
    code, first = run(capsys, "convert", shipped("smith.json"))
    assert code == EXIT_OK
    assert json.loads(first)["type"] == "ddae"
    code, second = run(capsys, "convert", write_document(tmp_path, "smith_ddae.json", first))
    assert code == EXIT_OK and second == first


def test_norm_smith_predictor(capsys):
    """Test that the Smith predictor norm 1.3308 is attained at a finite frequency"""
    code, out = run(capsys, "norm", shipped("smith.json"))
    assert code == EXIT_OK
    document = json.loads(out)
    assert document["strong_norm"] == pytest.approx(1.3308, abs=2e-3)
    assert document["frequency"] != "inf" and document["frequency"] > 0
    assert document["theta_star"] == []


def test_extrema_tsh_peak_does_not_depend_on_N(capsys):
    """Test the T_sh peak 2.5788 and that N = 10 and N = 30 correct to the same frequency"""
    peaks = {}
    for N in ("10", "30"):
        code, out = run(capsys, "extrema", shipped("tsh.json"), "--N", N)
        assert code == EXIT_OK
        entries = json.loads(out)["extrema"]
        peaks[N] = max(entries, key=lambda entry: entry["xi"])
    logger.info(f"T_sh peaks: {peaks}")
    assert peaks["30"]["xi"] == pytest.approx(2.5788, abs=1e-3)
    assert abs(peaks["10"]["omega"] - peaks["30"]["omega"]) <= 1e-6
    assert abs(peaks["10"]["xi"] - peaks["30"]["xi"]) <= 1e-6


def test_converted_smith_keeps_its_norm(capsys, tmp_path):
    """Test that the norm of the converted Smith predictor file is still 1.3308"""
    code, converted = run(capsys, "convert", shipped("smith.json"))
    assert code == EXIT_OK
    code, out = run(capsys, "norm", write_document(tmp_path, "smith_ddae.json", converted))
    assert code == EXIT_OK
    assert json.loads(out)["strong_norm"] == pytest.approx(1.3308, abs=2e-3)


def test_bode_perturbed_tsh_exceeds_standard_peak(capsys):
    """Test that a 1% delay perturbation of T_sh lifts high-frequency magnitudes above 2.5788"""
    code, out = run(capsys, "bode", shipped("tsh_perturbed.json"), "--wmin", "155", "--wmax", "156",
                    "--points", "2001")
    assert code == EXIT_OK
    _, rows = csv_rows(out)
    peak = max(row[1] for row in rows)
    logger.info(f"Perturbed T_sh magnitude on [155, 156] peaks at {peak}")
    assert 3.9 < peak <= 4.2


def test_exit_codes(capsys, tmp_path):
    """Test the exit codes for causality, stability and input failures"""
    acausal = write_document(tmp_path, "acausal.json", {
        "type": "ddae", "E": [[1.0, 0.0], [0.0, 0.0]],
        "terms": [{"delay": 0.0, "A": [[-1.0, 0.0], [0.0, 0.0]]}],
        "B": [[0.0], [1.0]], "C": [[1.0, 1.0]],
    })
    assert run(capsys, "norm", acausal)[0] == EXIT_CAUSALITY
    assert run(capsys, "extrema", acausal)[0] == EXIT_CAUSALITY

    oscillator = write_document(tmp_path, "oscillator.json", {
        "type": "ddae", "E": [[1.0, 0.0], [0.0, 1.0]],
        "terms": [{"delay": 0.0, "A": [[0.0, 1.0], [-1.0, 0.0]]}],
        "B": [[0.0], [1.0]], "C": [[1.0, 0.0]],
    })
    assert run(capsys, "norm", oscillator)[0] == EXIT_STABILITY

    assert run(capsys, "norm", write_document(tmp_path, "broken.json", "{"))[0] == EXIT_INPUT
    assert run(capsys, "norm", os.path.join(str(tmp_path), "missing.json"))[0] == EXIT_INPUT
    assert run(capsys, "norm", shipped("first_order.json"), "--N", "0")[0] == EXIT_INPUT
    assert run(capsys, "bode", shipped("first_order.json"), "--wmin", "2", "--wmax", "1", "--points", "5")[0] \
        == EXIT_INPUT
    assert run(capsys, "bode", shipped("first_order.json"), "--wmin", "0", "--wmax", "1", "--points", "5",
               "--log")[0] == EXIT_INPUT

    with pytest.raises(SystemExit) as excinfo:
        main(["norm"])
    assert excinfo.value.code == EXIT_INPUT
    with pytest.raises(SystemExit) as excinfo:
        main(["norm", shipped("first_order.json"), "--N", "many"])
    assert excinfo.value.code == EXIT_INPUT
