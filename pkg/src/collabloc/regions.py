"""Administrative levels shared by the overlay hierarchy and area-level privacy."""

from enum import IntEnum

from collabloc.errors import InvalidArgument


class Level(IntEnum):
    """Region levels, ordered so that ``COUNTRY > STATE > ... > CELL_TOWER``."""

    CELL_TOWER = 0
    CITY = 1
    COUNTY = 2
    STATE = 3
    COUNTRY = 4

    @classmethod
    def parse(cls, value) -> "Level":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_").replace(" ", "_")
        if key == "CELLTOWER":
            key = "CELL_TOWER"
        try:
            return cls[key]
        except KeyError:
            raise InvalidArgument(f"unknown level {value!r}") from None


# top-down order used when routing a request
TOP_DOWN = (Level.COUNTRY, Level.STATE, Level.COUNTY, Level.CITY, Level.CELL_TOWER)

PmLevel = Level
AreaLevel = Level
