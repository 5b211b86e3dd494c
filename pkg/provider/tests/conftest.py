import json

import pytest
from PIL import Image

from _samples import ATTRS_DOC, sample_images
from promptmaps.images import write_pgm_atomic


@pytest.fixture()
def stimuli_dir(tmp_path):
    root = tmp_path / "stimuli"
    images = sample_images()
    write_pgm_atomic(root / "scene01.pgm", images["scene01"])
    write_pgm_atomic(root / "scene02.pgm", images["scene02"])
    Image.fromarray(images["scene03"], mode="L").save(root / "scene03.png")
    return root


@pytest.fixture()
def attrs_path(tmp_path):
    path = tmp_path / "attrs.json"
    path.write_text(json.dumps(ATTRS_DOC))
    return path
