#![forbid(unsafe_code)]
#![doc = r#"
Core library for cross-platform term activity analysis.

The pipeline ingests timestamped text events, counts occurrences of
dictionary headwords under word-boundary rules, corrects monthly counts for
observation gaps, and then relates the two platforms' monthly series:
lead/lag cross-correlation with FDR control, tag association scores,
piecewise trend detection, and definition/trending contingency tests.

Modules follow the data flow:

* [`dictionary`]: headword records, filtering, analysis-set selection
* [`matcher`]: multi-pattern scanning with boundary and @-handle rules
* [`ingest`]: streaming event ingestion, daily counts, minute coverage
* [`series`]: monthly aggregation, coverage correction, imputation, z-scores
* [`correlation`]: windowed cross-correlation, significance, FDR, categories
* [`association`]: tag PMI and lexicon coverage tables
* [`trends`]: changepoint segmentation, trending months, contingency tests
* [`synth`]: seeded synthetic corpora with planted ground truth
"#]

pub mod association;
pub mod correlation;
pub mod dictionary;
pub mod ingest;
pub mod matcher;
pub mod month;
pub mod series;
pub mod synth;
pub mod trends;
