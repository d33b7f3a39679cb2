"""Analytic test scenes: primitives with exact SDFs, ray hits, and shading.

These provide dataset ground truth plus the oracles for geometry metrics
(signed distance queries, surface samples, per-primitive regions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Highlight:
    """Directional gloss term: amplitude * exp(sharpness * (dot(w, dir) - 1)).

    w is the outgoing direction (surface toward camera), so a spherical
    Gaussian lobe of the same form can represent it exactly.
    """

    color: tuple
    direction: tuple
    sharpness: float = 8.0

    def eval(self, outgoing: np.ndarray) -> np.ndarray:
        d = np.asarray(self.direction, dtype=np.float64)
        d = d / np.linalg.norm(d)
        dot = np.clip(outgoing @ d, -1.0, 1.0)
        atten = np.exp(self.sharpness * (dot - 1.0))
        return atten[..., None] * np.asarray(self.color, dtype=np.float64)


@dataclass
class Sphere:
    center: tuple
    radius: float
    color: tuple = (0.8, 0.3, 0.3)
    highlight: Highlight | None = None

    def sdf(self, p):
        return np.linalg.norm(p - np.asarray(self.center), axis=-1) - self.radius

    def intersect(self, o, d):
        c = np.asarray(self.center, dtype=np.float64)
        oc = o - c
        b = np.sum(oc * d, axis=-1)
        disc = b * b - (np.sum(oc * oc, axis=-1) - self.radius ** 2)
        ok = disc >= 0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t0 = -b - sq
        t1 = -b + sq
        t = np.where(t0 > 1e-9, t0, t1)
        return np.where(ok & (t > 1e-9), t, np.inf)

    def aabb(self):
        c = np.asarray(self.center, dtype=np.float64)
        return c - self.radius, c + self.radius

    def area(self):
        return 4.0 * np.pi * self.radius ** 2

    def surface_samples(self, n, rng):
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return np.asarray(self.center) + self.radius * v


@dataclass
class Box:
    center: tuple
    half_extents: tuple
    color: tuple = (0.3, 0.5, 0.8)
    highlight: Highlight | None = None

    def sdf(self, p):
        q = np.abs(p - np.asarray(self.center)) - np.asarray(self.half_extents)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def intersect(self, o, d):
        c = np.asarray(self.center, dtype=np.float64)
        h = np.asarray(self.half_extents, dtype=np.float64)
        safe_d = np.where(d != 0, d, 1e-300)
        t0 = (c - h - o) / safe_d
        t1 = (c + h - o) / safe_d
        tmin = np.minimum(t0, t1).max(axis=-1)
        tmax = np.maximum(t0, t1).min(axis=-1)
        hit = (tmax >= tmin) & (tmax > 1e-9)
        t = np.where(tmin > 1e-9, tmin, tmax)
        return np.where(hit, t, np.inf)

    def aabb(self):
        c = np.asarray(self.center, dtype=np.float64)
        h = np.asarray(self.half_extents, dtype=np.float64)
        return c - h, c + h

    def area(self):
        a, b, c = self.half_extents
        return 8.0 * (a * b + b * c + a * c)

    def surface_samples(self, n, rng):
        a, b, c = (float(x) for x in self.half_extents)
        areas = np.array([b * c, b * c, a * c, a * c, a * b, a * b])
        faces = rng.choice(6, size=n, p=areas / areas.sum())
        u = rng.uniform(-1, 1, size=(n, 2))
        out = np.empty((n, 3))
        h = np.array([a, b, c])
        for f in range(6):
            sel = faces == f
            axis = f // 2
            sign = 1.0 if f % 2 == 0 else -1.0
            rest = [i for i in range(3) if i != axis]
            out[sel, axis] = sign * h[axis]
            out[sel, rest[0]] = u[sel, 0] * h[rest[0]]
            out[sel, rest[1]] = u[sel, 1] * h[rest[1]]
        return out + np.asarray(self.center)


@dataclass
class Rod:
    """Capsule: segment from p0 to p1 with the given radius."""

    p0: tuple
    p1: tuple
    radius: float
    color: tuple = (0.2, 0.7, 0.3)
    highlight: Highlight | None = None

    def _axis(self):
        a = np.asarray(self.p0, dtype=np.float64)
        b = np.asarray(self.p1, dtype=np.float64)
        return a, b, b - a

    def sdf(self, p):
        a, b, ab = self._axis()
        ap = p - a
        h = np.clip(np.sum(ap * ab, axis=-1) / np.sum(ab * ab), 0.0, 1.0)
        return np.linalg.norm(ap - h[..., None] * ab, axis=-1) - self.radius

    def intersect(self, o, d):
        # infinite-cylinder quadratic, then clamp to the segment + cap spheres
        a, b, ab = self._axis()
        L = np.linalg.norm(ab)
        axis = ab / L
        oc = o - a
        d_perp = d - (d @ axis)[..., None] * axis
        oc_perp = oc - (oc @ axis)[..., None] * axis
        A = np.sum(d_perp * d_perp, axis=-1)
        B = np.sum(d_perp * oc_perp, axis=-1)
        C = np.sum(oc_perp * oc_perp, axis=-1) - self.radius ** 2
        disc = B * B - A * C
        ok = (disc >= 0) & (A > 1e-12)
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t_cyl = np.where(ok, (-B - sq) / np.where(A > 1e-12, A, 1.0), np.inf)
        # keep cylinder hits within the segment span
        s = (o + t_cyl[..., None] * d - a) @ axis
        t_cyl = np.where((t_cyl > 1e-9) & (s >= 0) & (s <= L), t_cyl, np.inf)
        best = t_cyl
        for cap in (a, b):
            oc2 = o - cap
            bq = np.sum(oc2 * d, axis=-1)
            disc2 = bq * bq - (np.sum(oc2 * oc2, axis=-1) - self.radius ** 2)
            ok2 = disc2 >= 0
            sq2 = np.sqrt(np.where(ok2, disc2, 0.0))
            t0 = -bq - sq2
            t0 = np.where(ok2 & (t0 > 1e-9), t0, np.inf)
            best = np.minimum(best, t0)
        return best

    def aabb(self):
        a = np.asarray(self.p0, dtype=np.float64)
        b = np.asarray(self.p1, dtype=np.float64)
        return np.minimum(a, b) - self.radius, np.maximum(a, b) + self.radius

    def area(self):
        L = np.linalg.norm(np.asarray(self.p1, dtype=np.float64) - np.asarray(self.p0))
        return 2.0 * np.pi * self.radius * L + 4.0 * np.pi * self.radius ** 2

    def surface_samples(self, n, rng):
        a, b, ab = self._axis()
        L = np.linalg.norm(ab)
        cyl_area = 2 * np.pi * self.radius * L
        cap_area = 4 * np.pi * self.radius ** 2
        on_cyl = rng.uniform(size=n) < cyl_area / (cyl_area + cap_area)
        axis = ab / L
        # orthonormal frame around the axis
        ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = np.cross(axis, ref)
        u /= np.linalg.norm(u)
        v = np.cross(axis, u)
        ang = rng.uniform(0, 2 * np.pi, size=n)
        h = rng.uniform(0, 1, size=n)
        ring = np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v
        pts = a + h[:, None] * ab + self.radius * ring
        sph = rng.normal(size=(n, 3))
        sph /= np.linalg.norm(sph, axis=1, keepdims=True)
        which_cap = rng.uniform(size=n) < 0.5
        cap_pts = np.where(which_cap[:, None], a, b) + self.radius * sph
        return np.where(on_cyl[:, None], pts, cap_pts)


PRIMITIVE_TYPES = {"sphere": Sphere, "box": Box, "rod": Rod}


@dataclass
class SceneSpec:
    """Named analytic scene: primitives, background, and a foreground box."""

    name: str
    primitives: list
    background: tuple = (0.5, 0.5, 0.5)
    bounds_margin: float = 0.12

    def bounds(self):
        """World AABB enclosing all primitives plus a margin."""
        los, his = zip(*(p.aabb() for p in self.primitives)) if self.primitives else \
            ((np.zeros(3),), (np.zeros(3),))
        lo = np.min(np.stack(los), axis=0) - self.bounds_margin
        hi = np.max(np.stack(his), axis=0) + self.bounds_margin
        return lo, hi

    def sdf(self, p):
        """Signed distance of the union of primitives."""
        p = np.asarray(p, dtype=np.float64)
        if not self.primitives:
            return np.full(p.shape[:-1], np.inf)
        return np.min(np.stack([prim.sdf(p) for prim in self.primitives]), axis=0)

    def trace(self, origins, dirs):
        """Closest hit: (t, primitive index); inf / -1 on miss."""
        origins = np.asarray(origins, dtype=np.float64)
        dirs = np.asarray(dirs, dtype=np.float64)
        best_t = np.full(origins.shape[:-1], np.inf)
        best_id = np.full(origins.shape[:-1], -1, dtype=np.int64)
        for k, prim in enumerate(self.primitives):
            t = prim.intersect(origins, dirs)
            closer = t < best_t
            best_t = np.where(closer, t, best_t)
            best_id = np.where(closer, k, best_id)
        return best_t, best_id

    def shade(self, origins, dirs):
        """Radiance toward the camera for each ray (background on miss)."""
        t, pid = self.trace(origins, dirs)
        out = np.broadcast_to(np.asarray(self.background, dtype=np.float64),
                              origins.shape[:-1] + (3,)).copy()
        for k, prim in enumerate(self.primitives):
            sel = pid == k
            if not sel.any():
                continue
            rgb = np.broadcast_to(np.asarray(prim.color, dtype=np.float64), (sel.sum(), 3)).copy()
            if prim.highlight is not None:
                rgb = rgb + prim.highlight.eval(-np.asarray(dirs)[sel])
            out[sel] = np.clip(rgb, 0.0, 1.0)
        return out

    def surface_samples(self, n, rng):
        """Area-weighted samples over the union surface (outside other prims)."""
        areas = np.array([p.area() for p in self.primitives])
        counts = np.maximum(1, (n * areas / areas.sum()).astype(int))
        pts = np.concatenate([p.surface_samples(c, rng)
                              for p, c in zip(self.primitives, counts)])
        # drop samples buried inside another primitive
        keep = self.sdf(pts) > -1e-9
        return pts[keep]

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        prims = []
        for p in self.primitives:
            d = {"type": {Sphere: "sphere", Box: "box", Rod: "rod"}[type(p)]}
            for f in ("center", "radius", "half_extents", "p0", "p1", "color"):
                if hasattr(p, f):
                    v = getattr(p, f)
                    d[f] = list(v) if np.ndim(v) else float(v)
            if p.highlight is not None:
                d["highlight"] = {"color": list(p.highlight.color),
                                  "direction": list(p.highlight.direction),
                                  "sharpness": p.highlight.sharpness}
            prims.append(d)
        return {"name": self.name, "primitives": prims,
                "background": list(self.background),
                "bounds_margin": self.bounds_margin}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        prims = []
        for pd in d["primitives"]:
            pd = dict(pd)
            kind = pd.pop("type")
            hl = pd.pop("highlight", None)
            prim = PRIMITIVE_TYPES[kind](**{k: tuple(v) if isinstance(v, list) else v
                                            for k, v in pd.items()})
            if hl is not None:
                prim.highlight = Highlight(tuple(hl["color"]), tuple(hl["direction"]),
                                           hl["sharpness"])
            prims.append(prim)
        return cls(d["name"], prims, tuple(d["background"]), d["bounds_margin"])
