"""Constant (persistence) reference adapter.

Forecasts every series by repeating its last observed value. Doubles
as the protocol test fixture and the naive baseline: it exercises the
full handshake and forecast path with deterministic output. Run with
``python -m mortbench.adapters.constant``.
"""

from __future__ import annotations

import json
import sys

PROTOCOL_VERSION = 1


def emit(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def main() -> int:
    emit({"type": "hello", "name": "constant", "protocol": PROTOCOL_VERSION})
    for line in sys.stdin:
        if not line.strip():
            continue
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            emit({"type": "error", "message": f"bad JSON: {line.strip()!r}"})
            continue
        mtype = msg.get("type")
        if mtype == "capabilities":
            emit(
                {
                    "type": "capabilities",
                    "supports_training": False,
                    "deterministic": True,
                }
            )
        elif mtype == "forecast":
            rid = msg.get("id")
            values = msg.get("values") or []
            horizon = msg.get("horizon", 0)
            if not values or horizon < 1:
                emit(
                    {
                        "type": "error",
                        "id": rid,
                        "message": "forecast needs nonempty values and horizon >= 1",
                    }
                )
                continue
            last = float(values[-1])
            emit({"type": "forecast_result", "id": rid, "values": [last] * horizon})
        elif mtype == "train":
            emit(
                {
                    "type": "error",
                    "id": msg.get("id"),
                    "message": "constant adapter does not support training",
                }
            )
        else:
            emit({"type": "error", "message": f"unsupported message type {mtype!r}"})
    return 0


if __name__ == "__main__":
    sys.exit(main())
