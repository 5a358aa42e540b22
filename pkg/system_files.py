import os
import json
import logging
import math
from typing import Any, Dict, Iterable, List, Optional

from errors import ModelError, SystemFileError
from extrema import ExtremaOptions, ExtremumPoint
from model import DdaeSystem, LftDelaySystem, feedback, lft_to_ddae, negate, parallel, series
from strongnorm import NormOptions, StrongNormResult

# Configure logging
logger = logging.getLogger(__name__)

LFT_BLOCKS = ("F", "A", "B1", "B2", "C1", "C2", "D11", "D12", "D21", "D22")
LFT_DELAYS = ("internal_delays", "input_delays", "output_delays")


def read_document(path: str) -> Dict[str, Any]:
    """
    Read a JSON document from disk

    Args:
        path: File path

    Returns:
        The parsed top-level object
    """
    try:
        with open(path, 'r', encoding='utf-8') as f:
            document = json.load(f)
    except OSError as e:
        logger.error(f"Error reading system file {path}: {e}")
        raise SystemFileError(f"cannot read file: {e}", path)
    except json.JSONDecodeError as e:
        logger.error(f"Error parsing system file {path}: {e}")
        raise SystemFileError(f"invalid JSON: {e}", path)
    except UnicodeDecodeError as e:
        logger.error(f"System file {path} is not UTF-8: {e}")
        raise SystemFileError(f"invalid UTF-8: {e}", path)
    if not isinstance(document, dict):
        raise SystemFileError("top level must be an object", path)
    return document


def load_system(path: str) -> DdaeSystem:
    """
    Load a ddae, lft or interconnection file as a DdaeSystem

    Args:
        path: File path

    Returns:
        The system in DDAE standard form
    """
    document = read_document(path)
    system = system_from_document(document, os.path.dirname(os.path.abspath(path)), path)
    logger.info(f"Loaded {document.get('type')} system from {path} with n = {system.n} and m = {system.m}")
    return system


def system_from_document(document: Dict[str, Any], base_dir: str = ".", path: str = "") -> DdaeSystem:
    """
    Build a DdaeSystem from a parsed SystemFile document

    Args:
        document: Parsed JSON object with a "type" key
        base_dir: Directory against which subsystem file paths are resolved
        path: Source file, only used in error messages

    Returns:
        The system in DDAE standard form
    """
    kind = document.get("type")
    try:
        if kind == "ddae":
            return _ddae_from_document(document)
        if kind == "lft":
            return lft_to_ddae(_lft_from_document(document))
        if kind == "interconnection":
            return Interconnection(document, base_dir, path).build()
    except ModelError as e:
        logger.error(f"Invalid {kind} system in {path or 'document'}: {e}")
        raise SystemFileError(str(e), path)
    except (KeyError, TypeError, ValueError) as e:
        logger.error(f"Malformed {kind} document in {path or 'document'}: {e!r}")
        raise SystemFileError(f"malformed {kind} document: {e!r}", path)
    raise SystemFileError(f'unknown type {kind!r}, expected "ddae", "lft" or "interconnection"', path)


def _ddae_from_document(document: Dict[str, Any]) -> DdaeSystem:
    terms = [(term["delay"], term["A"]) for term in document["terms"]]
    return DdaeSystem(E=document["E"], terms=tuple(terms), B=document["B"], C=document["C"])


def _lft_from_document(document: Dict[str, Any]) -> LftDelaySystem:
    blocks = {name: document.get(name, []) for name in LFT_BLOCKS}
    if not document.get("D11"):
        blocks["D11"] = [[0.0]]
    delays = {name: tuple(document.get(name, [])) for name in LFT_DELAYS}
    return LftDelaySystem(**blocks, **delays)


class Interconnection:
    """Named subsystems combined by a list of series/parallel/feedback/negate steps"""

    def __init__(self, document: Dict[str, Any], base_dir: str, path: str = ""):
        self.document = document
        self.base_dir = base_dir
        self.path = path
        # Systems by name, subsystems first and then step results
        self.systems: Dict[str, DdaeSystem] = {}

    def build(self) -> DdaeSystem:
        """
        Resolve the subsystems and run the steps

        Returns:
            The "output" system, or the last step result when no output is named
        """
        for name, entry in self.document["subsystems"].items():
            self.systems[name] = self._load_subsystem(name, entry)

        last: Optional[str] = None
        for index, step in enumerate(self.document["steps"]):
            last = step.get("name", f"step{index}")
            self.systems[last] = self._run_step(index, step)
            logger.debug(f"Interconnection step {index} ({step['op']}) gives {last} of dimension "
                         f"{self.systems[last].n}")

        output = self.document.get("output", last)
        if output is None:
            raise SystemFileError("interconnection has no steps and no output", self.path)
        return self._lookup(output)

    def _load_subsystem(self, name: str, entry) -> DdaeSystem:
        if isinstance(entry, str):
            return load_system(os.path.join(self.base_dir, entry))
        if isinstance(entry, dict):
            return system_from_document(entry, self.base_dir, f"{self.path}#{name}")
        raise SystemFileError(f"subsystem {name!r} must be an inline document or a file path", self.path)

    def _lookup(self, name: str) -> DdaeSystem:
        if name not in self.systems:
            raise SystemFileError(f"unknown subsystem {name!r}", self.path)
        return self.systems[name]

    def _run_step(self, index: int, step: Dict[str, Any]) -> DdaeSystem:
        op = step["op"]
        args = [self._lookup(name) for name in step["args"]]
        expected = 1 if op == "negate" else 2
        if len(args) != expected:
            raise SystemFileError(f"step {index}: {op} takes {expected} arguments, got {len(args)}", self.path)
        if op == "series":
            return series(*args)
        if op == "parallel":
            return parallel(*args)
        if op == "feedback":
            return feedback(*args, sign=int(step.get("sign", -1)))
        if op == "negate":
            return negate(*args)
        raise SystemFileError(f"step {index}: unknown op {op!r}", self.path)


def ddae_document(system: DdaeSystem) -> Dict[str, Any]:
    """The "ddae" SystemFile document of a system"""
    return {
        "type": "ddae",
        "E": system.E.tolist(),
        "terms": [{"delay": float(tau), "A": A.tolist()} for tau, A in system.terms],
        "B": system.B.tolist(),
        "C": system.C.tolist(),
    }


def dumps(document: Dict[str, Any]) -> str:
    """Serialize a document; floats use the shortest repr that round-trips"""
    return json.dumps(document, indent=2) + "\n"


def _encode_float(value: float):
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def extremum_entry(point: ExtremumPoint) -> Dict[str, Any]:
    return {
        "omega": _encode_float(point.omega),
        "xi": _encode_float(point.xi),
        "kind": point.kind,
        "converged": point.converged,
        "residual": _encode_float(point.residual),
        "iterations": point.iterations,
        "predictor_omega": _encode_float(point.predictor_omega),
    }


def config_echo(opts: NormOptions) -> Dict[str, Any]:
    """The "config" block: every setting that can change the numbers"""
    extrema: ExtremaOptions = opts.extrema
    return {
        "N": extrema.N,
        "axis_tol": extrema.axis_tol,
        "corrector_tol": extrema.corrector_tol,
        "rank_tol": extrema.rank_tol,
        "max_iter": extrema.max_iter,
        "grid_density": opts.grid.density,
        "compact_history": extrema.compact_history,
        "active_tol": opts.active_tol,
        "asymptotic_override": opts.asymptotic_override,
    }


def extrema_document(points: Iterable[ExtremumPoint], predicted: Iterable, opts: NormOptions,
                     include_unconverged: bool = False) -> Dict[str, Any]:
    """ResultDocument of the extrema command"""
    entries: List[Dict[str, Any]] = [extremum_entry(p) for p in points if p.converged or include_unconverged]
    return {
        "extrema": entries,
        "predicted": [{"omega": _encode_float(w), "xi": _encode_float(x)} for w, x in predicted],
        "config": config_echo(opts),
    }


def norm_document(result: StrongNormResult, opts: NormOptions,
                  include_unconverged: bool = False) -> Dict[str, Any]:
    """ResultDocument of the norm command"""
    document = {
        "strong_norm": _encode_float(result.strong_norm),
        "frequency": _encode_float(result.frequency),
        "standard_peak": _encode_float(result.standard_peak),
        "peak_frequency": _encode_float(result.peak_frequency),
        "asymptotic_norm": _encode_float(result.asymptotic_norm),
        "theta_star": [_encode_float(t) for t in result.theta_star],
        "active_delays": list(result.active_delays),
    }
    document.update(extrema_document(result.extrema, result.predicted, opts, include_unconverged))
    return document
