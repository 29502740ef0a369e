"""schoolsweep: weakly supervised school mapping pipeline.

Stages: dataset assembly and cleaning, stratified splitting, tile
classification, attribution-based localization, faithfulness evaluation,
country-scale sweeps, and a matching/validation HTTP service.
"""

__version__ = "0.1.0"
