"""Small image and primitive builders shared by the tests."""
import numpy as np

from fullinterp.errors import ValidationError
from fullinterp.geometry import ContourPrim, ImagePatch


def flat(w, h, value=0.5):
    return ImagePatch(np.full((h, w), value))


def step_image(w, h, col, left=0.0, right=1.0):
    """Vertical step edge: columns < ``col`` are ``left``, the rest ``right``."""
    px = np.full((h, w), right)
    px[:, :col] = left
    return ImagePatch(px)


def random_polyline(rng, n, scale=20.0, closed=False, offset=0.0):
    while True:
        v = rng.uniform(0, scale, size=(n, 2)) + offset
        try:
            return ContourPrim(v, closed)
        except ValidationError:
            continue


def arc(cx, cy, r, a0, a1, n):
    t = np.linspace(a0, a1, n)
    return ContourPrim(np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)]))


def circle(cx, cy, r, n=64):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return ContourPrim(np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)]), closed=True)


def small_instance(seed):
    """A 4-part schema, a random patch, <= 6 random candidates per kind and a forest.

    The forest is trained on vectors of random configurations of the same
    patch, so its scores vary across the search space.
    """
    from fullinterp.candidates import CandidateSet
    from fullinterp.forest import ForestParams, train_forest
    from fullinterp.geometry import ImagePatch, PointPrim, SquareRegionPrim
    from fullinterp.model import PatchFeatures, RelationSpec, StructureSchema, assemble_feature_vector

    rng = np.random.default_rng([seed, 77])
    schema = StructureSchema(
        "small",
        (("p", "point"), ("a", "contour"), ("b", "contour"), ("r", "region")),
        (
            RelationSpec("location", ("p",)),
            RelationSpec("location", ("a",)),
            RelationSpec("cover", ("a", "p")),
            RelationSpec("parallelism", ("a", "b")),
            RelationSpec("continuity", ("a", "b")),
            RelationSpec("containment", ("p", "r")),
            RelationSpec("appearance_in_region", ("r",)),
        ),
    )
    img = ImagePatch(rng.random((32, 32)))
    n = [int(rng.integers(2, 7)) for _ in range(3)]
    cands = CandidateSet(
        points=[PointPrim(*rng.uniform(2, 29, size=2)) for _ in range(n[0])],
        contours=[random_polyline(rng, int(rng.integers(2, 5)), scale=24.0, offset=4.0) for _ in range(max(n[1], 2))],
        regions=[SquareRegionPrim(*rng.uniform(6, 25, size=2), float(rng.uniform(3, 10))) for _ in range(n[2])],
    )
    feats = PatchFeatures(img)
    rows = []
    for _ in range(240):
        a, b = rng.choice(len(cands.contours), size=2, replace=False)
        cfg = {
            "p": cands.points[int(rng.integers(len(cands.points)))],
            "a": cands.contours[int(a)],
            "b": cands.contours[int(b)],
            "r": cands.regions[int(rng.integers(len(cands.regions)))],
        }
        rows.append(assemble_feature_vector(schema, cfg, img, features=feats))
    X = np.array(rows)
    y = rng.random(len(X)) < 0.3
    y[0], y[1] = True, False
    forest = train_forest(X[y], X[~y], ForestParams(n_trees=10, max_depth=6, seed=seed % 1000))
    return schema, img, cands, forest
