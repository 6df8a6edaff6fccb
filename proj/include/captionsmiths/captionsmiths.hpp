#pragma once

#include "captionsmiths/error.hpp"
#include "captionsmiths/rng.hpp"
#include "captionsmiths/hash.hpp"
#include "captionsmiths/numeric.hpp"
#include "captionsmiths/provenance.hpp"
#include "captionsmiths/corpus.hpp"
#include "captionsmiths/synthetic.hpp"
#include "captionsmiths/ols.hpp"
#include "captionsmiths/conditioner.hpp"
#include "captionsmiths/encoder.hpp"
#include "captionsmiths/model.hpp"
#include "captionsmiths/train.hpp"
#include "captionsmiths/eval.hpp"
