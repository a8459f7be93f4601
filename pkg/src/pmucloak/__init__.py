"""pmucloak: synchrophasor traffic camouflage and its detection.

A research toolkit that disguises an arbitrary byte stream as a plausible
PMU (synchrophasor) telemetry session: a regex-language codec turns payload
bytes into format-conforming symbol strings, a field mapper embeds the
symbols in observed per-field value dictionaries, and a timing model shapes
inter-frame delays to mimic a reference traffic capture. The package also
ships the corresponding detector, which checks observed transition
frequencies against a reference delay model using confidence intervals,
plus a TCP tunnel and a CLI to run the full loop.
"""

__version__ = "0.1.0"
