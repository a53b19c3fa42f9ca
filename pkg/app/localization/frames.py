"""WGS-84 <-> local tangent plane <-> maneuver frame transforms.

The tangent plane is the flat-earth approximation about the origin, using the
meridian and prime-vertical radii at the origin latitude. It is accurate well
below GNSS noise within about 2 km of the origin.
"""

import math

import numpy as np

from app.schemas.pose import ManeuverPose, Wgs84Pose

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)


def wrap_angle(angle):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    return angle - 2.0 * np.pi * np.ceil((angle - np.pi) / (2.0 * np.pi))


def earth_radii(lat: float) -> tuple[float, float]:
    """Meridian and prime-vertical radii of curvature at a latitude."""
    sin2 = math.sin(lat) ** 2
    denom = 1.0 - WGS84_E2 * sin2
    r_m = WGS84_A * (1.0 - WGS84_E2) / denom**1.5
    r_n = WGS84_A / math.sqrt(denom)
    return r_m, r_n


def wgs_to_enu(
    lat: float, lon: float, alt: float, origin: Wgs84Pose
) -> tuple[float, float, float]:
    """Project a geodetic position onto the tangent plane at ``origin`` (east, north, up)."""
    r_m, r_n = earth_radii(origin.lat)
    north = (lat - origin.lat) * (r_m + origin.alt)
    east = float(wrap_angle(lon - origin.lon)) * (r_n + origin.alt) * math.cos(origin.lat)
    return east, north, alt - origin.alt


def enu_to_wgs(
    east: float, north: float, up: float, origin: Wgs84Pose
) -> tuple[float, float, float]:
    """Inverse of :func:`wgs_to_enu`; returns (lat, lon, alt)."""
    r_m, r_n = earth_radii(origin.lat)
    lat = origin.lat + north / (r_m + origin.alt)
    lon = float(wrap_angle(origin.lon + east / ((r_n + origin.alt) * math.cos(origin.lat))))
    return lat, lon, origin.alt + up


def enu_to_maneuver(east: float, north: float, theta0: float) -> tuple[float, float]:
    # forward along theta0, left perpendicular; the matrix is its own inverse
    c, s = math.cos(theta0), math.sin(theta0)
    return north * c + east * s, north * s - east * c


def wgs_to_maneuver(p: Wgs84Pose, origin: Wgs84Pose) -> ManeuverPose:
    """Express a geodetic pose in the maneuver frame anchored at ``origin``."""
    east, north, up = wgs_to_enu(p.lat, p.lon, p.alt, origin)
    x, y = enu_to_maneuver(east, north, origin.heading)
    return ManeuverPose(x=x, y=y, z=up, psi=float(wrap_angle(origin.heading - p.heading)))


def maneuver_to_wgs(p: ManeuverPose, origin: Wgs84Pose) -> Wgs84Pose:
    """Inverse of :func:`wgs_to_maneuver`."""
    north, east = enu_to_maneuver(p.y, p.x, origin.heading)
    lat, lon, alt = enu_to_wgs(east, north, p.z, origin)
    return Wgs84Pose(
        lat=lat,
        lon=lon,
        alt=alt,
        heading=float(wrap_angle(origin.heading - p.psi)),
    )
