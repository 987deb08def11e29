"""Exception hierarchy shared across the package."""


class Mock3DError(Exception):
    """Base class for all engine errors."""


class DecodeError(Mock3DError):
    """Raised when an image cannot be read or decoded into a shape map."""


class SceneError(Mock3DError):
    """Raised when a scene file fails to load or violates an invariant."""


class MeshError(Mock3DError):
    """Raised on invalid patch-mesh topology or operations."""
