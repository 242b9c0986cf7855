#pragma once

#include "facesig/error.hpp"
#include "facesig/signature.hpp"
#include "facesig/matching.hpp"
#include "facesig/weighting.hpp"
#include "facesig/identification.hpp"
#include "facesig/evaluation.hpp"
#include "facesig/stats.hpp"
#include "facesig/synth.hpp"
#include "facesig/io.hpp"
