#ifndef PAIRCLF_HPP
#define PAIRCLF_HPP

#include "pairclf/analysis/common.hpp"
#include "pairclf/analysis/embedding.hpp"
#include "pairclf/analysis/pca.hpp"
#include "pairclf/analysis/perturb.hpp"
#include "pairclf/analysis/saliency.hpp"
#include "pairclf/analysis/score.hpp"
#include "pairclf/analysis/subgroup.hpp"
#include "pairclf/core/error.hpp"
#include "pairclf/core/fptn.hpp"
#include "pairclf/core/parallel.hpp"
#include "pairclf/core/prng.hpp"
#include "pairclf/core/runtime.hpp"
#include "pairclf/core/tensor.hpp"
#include "pairclf/data/manifest.hpp"
#include "pairclf/data/mask.hpp"
#include "pairclf/data/pairing.hpp"
#include "pairclf/data/synth.hpp"
#include "pairclf/model/bundle.hpp"
#include "pairclf/model/evaluate.hpp"
#include "pairclf/model/features.hpp"
#include "pairclf/model/landmarks.hpp"
#include "pairclf/model/pair_model.hpp"
#include "pairclf/model/train.hpp"
#include "pairclf/nn/adam.hpp"
#include "pairclf/nn/grad_check.hpp"
#include "pairclf/nn/layers.hpp"
#include "pairclf/nn/loss.hpp"
#include "pairclf/nn/sequential.hpp"
#include "pairclf/report/svg.hpp"
#include "pairclf/stats/decisions.hpp"
#include "pairclf/stats/report.hpp"
#include "pairclf/stats/summary.hpp"
#include "pairclf/stats/welch.hpp"

#endif // PAIRCLF_HPP
