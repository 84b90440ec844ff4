#ifndef EXACTCT_EXACTCT_HPP
#define EXACTCT_EXACTCT_HPP

#include "biomarkers.hpp"
#include "cohort.hpp"
#include "config.hpp"
#include "error.hpp"
#include "gmm.hpp"
#include "io/csv.hpp"
#include "io/overlay.hpp"
#include "io/snapshot.hpp"
#include "ml/bayes.hpp"
#include "ml/dataset.hpp"
#include "ml/linear.hpp"
#include "ml/metrics.hpp"
#include "ml/model.hpp"
#include "ml/trees.hpp"
#include "morphology.hpp"
#include "nifti.hpp"
#include "pipeline.hpp"
#include "rng.hpp"
#include "shap.hpp"
#include "synth.hpp"
#include "vesselness.hpp"
#include "volume.hpp"
#include "xgb.hpp"

#endif // EXACTCT_EXACTCT_HPP
