"""Urban building energy modeling at desk scale.

Pipeline stages: geospatial ingestion, terrain height extraction, archetype
assignment, LoD1 model generation with neighbor shading, hourly thermal
simulation, retrofit scenario search, and reporting. Each stage reads and
writes plain files so runs can be resumed, diffed and distributed.
"""

__version__ = "0.1.0"
