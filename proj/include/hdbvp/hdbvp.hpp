// SPDX-License-Identifier: MIT
// Umbrella header.

#pragma once

#include "hdbvp/fourier.hpp"
#include "hdbvp/grid.hpp"
#include "hdbvp/io.hpp"
#include "hdbvp/coefficients.hpp"
#include "hdbvp/norms.hpp"
#include "hdbvp/calculus.hpp"
#include "hdbvp/perturbation.hpp"
#include "hdbvp/bvp.hpp"
#include "hdbvp/verify.hpp"
#include "hdbvp/scenario.hpp"
