import subprocess
import sys
from pathlib import Path

SCRIPT = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_backends.py"


def test_benchmark_backends_agree():
    proc = subprocess.run([sys.executable, str(SCRIPT), "--repeat", "1", "--steps", "200", "--episodes", "5"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    rows = [line for line in proc.stdout.splitlines()[2:] if line.strip()]
    assert len(rows) == 3 and all(line.endswith("True") for line in rows)
