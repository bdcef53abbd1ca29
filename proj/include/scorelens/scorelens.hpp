#pragma once

#include "scorelens/common.hpp"
#include "scorelens/csv.hpp"
#include "scorelens/ingest.hpp"
#include "scorelens/embedstore.hpp"
#include "scorelens/priors.hpp"
#include "scorelens/lasso.hpp"
#include "scorelens/features.hpp"
#include "scorelens/eval.hpp"
#include "scorelens/deconfound.hpp"
#include "scorelens/disagree.hpp"
#include "scorelens/synth.hpp"
#include "scorelens/runconfig.hpp"
#include "scorelens/review.hpp"
