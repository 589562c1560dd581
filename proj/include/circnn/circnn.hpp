#pragma once

#include "circnn/autograd.hpp"
#include "circnn/channel_norm.hpp"
#include "circnn/circulant.hpp"
#include "circnn/conv.hpp"
#include "circnn/errors.hpp"
#include "circnn/experiments.hpp"
#include "circnn/fft.hpp"
#include "circnn/io.hpp"
#include "circnn/network.hpp"
#include "circnn/rng.hpp"
#include "circnn/theory.hpp"
#include "circnn/trace.hpp"
#include "circnn/types.hpp"
