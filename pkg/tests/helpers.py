import json
from pathlib import Path

CONFIG_DIR = Path(__file__).resolve().parent.parent / "scripts" / "configs"


def load_config(name):
    return json.loads((CONFIG_DIR / name).read_text())


def random_hermitian(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (a + a.conj().T) / 2
