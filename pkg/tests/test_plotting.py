import base64
import hashlib
import io
import re

import matplotlib
import numpy as np
import pytest
from PIL import Image

from uphill import plotting
from uphill.dynamics import CanonicalChart
from uphill.entropy import EntropyTrace

# checksum of the Jacobian heatmap below; tied to the matplotlib release that produced it
JACOBIAN_SVG_SHA256 = {"3.10.9": "95b9ab2d66a1c58a4ca5e64ed0b2896ef5c9a148579033227faa050a20b782c1"}


def jacobian_heatmap(path):
    chi = np.linspace(-1, 1, 32)
    z = np.linspace(-1.5, 1.5, 64)
    values = CanonicalChart.jacobian(np.meshgrid(chi, z, indexing="ij")[1])
    return plotting.plot_heatmap(values, (-1, 1, -1.5, 1.5), path, title="J")


def embedded_luminance(svg_text):
    match = re.search(r'xlink:href="data:image/png;base64,([^"]+)"', svg_text)
    assert match, "heatmap should embed its raster"
    img = Image.open(io.BytesIO(base64.b64decode(match.group(1)))).convert("L")
    return np.asarray(img, dtype=float)


def test_heatmap_bytes_are_reproducible(tmp_path):
    a = jacobian_heatmap(tmp_path / "a.svg").read_bytes()
    b = jacobian_heatmap(tmp_path / "b.svg").read_bytes()
    assert a == b
    # self-contained: every linked resource is inline
    assert b"<svg" in a
    assert re.findall(rb'href="(?!#|data:)', a) == []


def test_heatmap_checksum(tmp_path):
    expected = JACOBIAN_SVG_SHA256.get(matplotlib.__version__)
    if expected is None:
        pytest.skip(f"no reference checksum for matplotlib {matplotlib.__version__}")
    digest = hashlib.sha256(jacobian_heatmap(tmp_path / "j.svg").read_bytes()).hexdigest()
    assert digest == expected


def test_jacobian_colour_falls_off_with_abs_z(tmp_path):
    lum = embedded_luminance(jacobian_heatmap(tmp_path / "j.svg").read_text())
    column = lum[:, lum.shape[1] // 2]
    mid = len(column) // 2
    upper, lower = column[:mid + 1], column[mid:]
    assert np.all(np.diff(upper) >= 0) and np.all(np.diff(lower) <= 0)
    assert column[mid] - column[0] > 100
    # chi does not matter
    assert np.ptp(lum[mid, 5:-5]) == 0


def test_trace_plot_reproducible(tmp_path):
    trace = EntropyTrace()
    for k in range(20):
        t = 0.1 * k
        trace.append(t, 1 - np.exp(-t), 2 + np.exp(-t), np.exp(-t), np.exp(-t), 0.0, 1.0)
    a = plotting.plot_entropy_trace(trace, tmp_path / "a.svg", "demo").read_bytes()
    b = plotting.plot_entropy_trace(trace, tmp_path / "b.svg", "demo").read_bytes()
    assert a == b


def test_contour_overlay(tmp_path):
    x = np.linspace(1, 3, 20)
    field = np.outer(x, np.ones(10))
    path = plotting.plot_heatmap(field, (1, 3, 0, 1), tmp_path / "c.svg",
                                 contours={"B": (field, "white"), "psi": (field, "black")})
    assert path.stat().st_size > 0
