"""
Efficiency Scoring API
Evaluates distance functions, dual prices and efficiency status for single netputs

Technology payloads:
    {"kind": "vrs" | "fdh", "points": [[...], ...]}
    {"kind": "hrep", "normals": [[...], ...], "rhs": [...]}
"""

import logging
import os
import sys
from typing import Any, Dict, List

from dotenv import load_dotenv
from flask import Flask, jsonify, request
from flask_cors import CORS

from cli import dual_columns, eval_row, json_value, row_marker
from dual import dual_value
from errors import ConfigurationError, NetputEffError, UnsupportedRegimeError
from gmean import PParameter
from primal import evaluate_p
from technology import Direction, Fdh, HRep, Technology, VrsHull, as_netput, classify

load_dotenv()

logger = logging.getLogger("efficiency_api")

API_HOST = os.getenv("EFFICIENCY_API_HOST", "0.0.0.0")
API_PORT = os.getenv("EFFICIENCY_API_PORT", "5055")

app = Flask(__name__)
CORS(app, resources={r"/api/*": {"origins": "*", "methods": ["GET", "POST", "OPTIONS"], "allow_headers": ["Content-Type"]}})


class PayloadError(NetputEffError):
    pass


@app.errorhandler(PayloadError)
def handle_payload_error(error):
    return jsonify({"error": str(error)}), 400


@app.errorhandler(UnsupportedRegimeError)
def handle_unsupported(error):
    return jsonify({"error": str(error), "status": row_marker(error)}), 422


@app.errorhandler(NetputEffError)
def handle_library_error(error):
    return jsonify({"error": str(error), "type": type(error).__name__}), 400


@app.before_request
def before_request():
    logger.debug("📥 Request: %s %s", request.method, request.path)


# ---------------- PAYLOAD PARSING ---------------- #

def _body() -> Dict[str, Any]:
    data = request.get_json(silent=True)
    if not isinstance(data, dict):
        raise PayloadError("Request body must be a JSON object")
    return data


def _technology(spec: Any) -> Technology:
    if not isinstance(spec, dict):
        raise PayloadError("Missing required field: technology")
    kind = spec.get("kind")
    if kind in ("vrs", "fdh"):
        points = spec.get("points")
        if not points:
            raise PayloadError(f"{kind} technology needs a nonempty 'points' list")
        return VrsHull(points) if kind == "vrs" else Fdh(points)
    if kind == "hrep":
        if "normals" not in spec or "rhs" not in spec:
            raise PayloadError("hrep technology needs 'normals' and 'rhs'")
        return HRep(spec["normals"], spec["rhs"])
    raise PayloadError(f"Unknown technology kind: {kind!r}")


def _parse(data: Dict[str, Any]):
    tech = _technology(data.get("technology"))
    if "z" not in data:
        raise PayloadError("Missing required field: z")
    try:
        z = as_netput(data["z"])
        g = Direction(data["g"]) if data.get("g") is not None else Direction.observed(z)
    except (TypeError, ValueError) as e:
        raise PayloadError(f"Invalid netput or direction: {e}")
    tokens = data.get("p", ["1"])
    if not isinstance(tokens, list):
        tokens = [tokens]
    p_list = [PParameter.of(t) for t in tokens]
    try:
        tol = float(data.get("tol", 1e-6))
    except (TypeError, ValueError):
        raise PayloadError(f"tol must be a number, got {data.get('tol')!r}")
    if not tol > 0:
        raise PayloadError("tol must be positive")
    return str(data.get("id", "z")), tech, z, g, p_list, tol


def _payload(rows: List[Dict[str, Any]]) -> Dict[str, Any]:
    return {"success": True, "rows": [{k: json_value(v) for k, v in row.items()} for row in rows]}


# ---------------- ROUTES ---------------- #

@app.route("/api/health", methods=["GET"])
def health():
    return jsonify({"status": "healthy", "service": "efficiency-api"}), 200


@app.route("/api/evaluate", methods=["POST"])
def evaluate():
    """
    D_(p) for one netput.

    Request body:
    {"technology": {...}, "z": [-2, 1], "g": [2, 1], "p": ["-inf", "1"], "tol": 1e-6}
    """
    unit_id, tech, z, g, p_list, tol = _parse(_body())
    rows = [eval_row(unit_id, p, evaluate_p(tech, z, g, p, tol=tol)) for p in p_list]
    return jsonify(_payload(rows)), 200


@app.route("/api/dual", methods=["POST"])
def dual():
    """Optimal normalized prices and the duality gap; p < 1 on fdh answers 422."""
    unit_id, tech, z, g, p_list, tol = _parse(_body())
    rows = []
    for p in p_list:
        row = {"id": unit_id, "p": str(p)}
        row.update(dual_columns(dual_value(tech, z, g, p, tol=tol), p, "ok"))
        rows.append(row)
    return jsonify(_payload(rows)), 200


@app.route("/api/classify", methods=["POST"])
def classify_netput():
    unit_id, tech, z, g, _, _ = _parse(_body())
    if g.is_zero:
        raise PayloadError("direction has empty support")
    status = classify(tech, z, g.support)
    row = {
        "id": unit_id,
        "status": status.kind.value,
        "index_set": list(status.index_set),
        "blocked": list(status.witness),
    }
    return jsonify(_payload([row])), 200


def _port() -> int:
    try:
        return int(API_PORT)
    except ValueError:
        raise ConfigurationError(f"EFFICIENCY_API_PORT must be an integer, got {API_PORT!r}")


if __name__ == "__main__":
    logging.basicConfig(level=os.getenv("NETPUT_EFF_LOG_LEVEL", "INFO").upper(), format="[%(levelname)s] %(message)s")
    port = _port()
    print("=" * 60)
    print("🚀 Starting Efficiency Scoring API")
    print("=" * 60)
    print(f"   📍 URL: http://{API_HOST}:{port}")
    print("   🔌 Endpoints:")
    print("   ├─ GET  /api/health")
    print("   ├─ POST /api/evaluate")
    print("   ├─ POST /api/dual")
    print("   └─ POST /api/classify")
    print("=" * 60)
    sys.stdout.flush()
    app.run(host=API_HOST, port=port, threaded=True)
