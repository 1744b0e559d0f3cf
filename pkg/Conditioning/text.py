from __future__ import annotations

import numpy as np


TEMPLATES = ("{}", "An audio clip of {}", "The sound of {}")


def augment_text(label: str, rng: np.random.Generator) -> str:
    return TEMPLATES[int(rng.integers(len(TEMPLATES)))].format(label)


def strip_template(text: str) -> str:
    """Map any templated query back to its bare class label."""
    text = text.strip()
    for template in TEMPLATES[1:]:
        prefix = template.format("")
        if text.startswith(prefix):
            return text[len(prefix):].strip()
    return text
