"""
Fehlerklassen für snnd.

Jede Klasse trägt den Exit-Code, den die CLI bei diesem Fehler zurückgibt.
"""

from typing import Optional


class SnndError(Exception):
    """Basisklasse aller snnd-Fehler."""

    exit_code = 1


class UsageError(SnndError):
    """Falsche Verwendung einer API (z.B. backward auf Nicht-Skalar)."""

    exit_code = 1


class ConfigError(SnndError, ValueError):
    """Ungültige Konfiguration."""

    exit_code = 2


class ParameterError(ConfigError):
    """Ungültiger numerischer Parameter (z.B. Temperatur <= 0)."""


class DataError(SnndError, ValueError):
    """Ungültige Daten (Labels außerhalb des Bereichs, nicht normierte Zeilen...)."""

    exit_code = 3


class DimensionError(DataError):
    """Formen passen nicht zusammen."""


class FormatError(DataError):
    """
    Fehler beim Lesen einer Datei.

    Args:
        message: Fehlermeldung
        offset: Byte-Offset (Binärformate)
        line: Zeilennummer, 1-basiert (Textformate)
        column: Spaltennummer, 1-basiert (Textformate)
    """

    def __init__(
        self,
        message: str,
        offset: Optional[int] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
    ):
        location = []
        if offset is not None:
            location.append(f"Byte-Offset {offset}")
        if line is not None:
            location.append(f"Zeile {line}")
        if column is not None:
            location.append(f"Spalte {column}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.offset = offset
        self.line = line
        self.column = column


class NumericError(SnndError, ArithmeticError):
    """Eine Operation hat NaN oder Inf erzeugt."""

    exit_code = 4
