"""orgmorph: organoid instance-mask post-processing and morphometrics.

Submodules:

* ingestion      -- mask interchange formats (manifest, label maps, RLE)
* postprocess    -- background/border/lumen/debris fixes and curation
* morphometrics  -- the five per-organoid shape descriptors
* stats          -- group summaries and pairwise Student t-tests
* evaluation     -- IoU matching and mAP detection scoring
* reporting      -- CSV/JSON writers and overlay rendering
* synth          -- deterministic synthetic slide fixtures
* cli            -- `orgmorph run|stats|eval|serve`
* review_service -- curation HTTP API behind `orgmorph serve`
"""

__version__ = "0.1.0"
