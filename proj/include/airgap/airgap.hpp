#pragma once

#include "airgap/analysis.hpp"
#include "airgap/autoencoder.hpp"
#include "airgap/baselines.hpp"
#include "airgap/channel.hpp"
#include "airgap/complex_block.hpp"
#include "airgap/config.hpp"
#include "airgap/csv.hpp"
#include "airgap/errors.hpp"
#include "airgap/eval.hpp"
#include "airgap/feedback.hpp"
#include "airgap/linalg.hpp"
#include "airgap/model_io.hpp"
#include "airgap/nn.hpp"
#include "airgap/receiver.hpp"
#include "airgap/rng.hpp"
