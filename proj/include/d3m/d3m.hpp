#pragma once

#include "d3m/artifact.hpp"
#include "d3m/classifier.hpp"
#include "d3m/common.hpp"
#include "d3m/data_model.hpp"
#include "d3m/diffusion.hpp"
#include "d3m/hash.hpp"
#include "d3m/image.hpp"
#include "d3m/inversion.hpp"
#include "d3m/labeler.hpp"
#include "d3m/nn.hpp"
#include "d3m/patch_engine.hpp"
#include "d3m/rng.hpp"
#include "d3m/shapes.hpp"
#include "d3m/trainer.hpp"
