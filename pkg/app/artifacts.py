"""
Experiment artifacts: spectrum CSV/npz files, JSON documents and digests.
"""
import csv
import hashlib
import logging
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import BaseModel

from .sweep import Spectrum

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _number(value: float) -> str:
    return repr(float(value))


def write_spectrum_csv(spec: Spectrum, path: PathLike) -> Path:
    """freq_hz, then re_/im_/mag_ columns per probe; rows in frequency order."""
    path = Path(path)
    header = ["freq_hz"]
    for probe in spec.probes:
        header.extend([f"re_{probe}", f"im_{probe}", f"mag_{probe}"])
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for k, f in enumerate(spec.freqs):
            row = [_number(f)]
            for probe in spec.probes:
                value = spec.response[probe][k]
                row.extend([_number(value.real), _number(value.imag), _number(abs(value))])
            writer.writerow(row)
    return path


def read_spectrum_csv(path: PathLike) -> Spectrum:
    """Inverse of write_spectrum_csv; every sample is treated as a coarse sample."""
    with Path(path).open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or header[0] != "freq_hz":
            raise ValueError(f"{path}: not a spectrum CSV (missing freq_hz column)")
        rows = [[float(cell) for cell in row] for row in reader if row]
    data = np.asarray(rows, dtype=float).reshape(len(rows), len(header))
    response = {}
    for column, name in enumerate(header):
        if name.startswith("re_"):
            probe = name[3:]
            im_column = header.index(f"im_{probe}")
            response[probe] = data[:, column] + 1j * data[:, im_column]
    return Spectrum(data[:, 0], response)


def write_spectrum_npz(spec: Spectrum, path: PathLike) -> Path:
    path = Path(path)
    arrays = {"freqs": spec.freqs, "coarse_mask": spec.coarse_mask}
    for probe, values in spec.response.items():
        arrays[f"response_{probe}"] = values
    np.savez_compressed(path, **arrays)
    return path


def read_spectrum_npz(path: PathLike) -> Spectrum:
    with np.load(Path(path)) as data:
        response = {
            key[len("response_"):]: data[key] for key in data.files if key.startswith("response_")
        }
        return Spectrum(data["freqs"], response, coarse_mask=data["coarse_mask"])


def write_json(document: BaseModel, path: PathLike) -> Path:
    path = Path(path)
    path.write_text(document.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def file_digest(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
