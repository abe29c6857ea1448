#pragma once

#include "aelsvi/errors.hpp"
#include "aelsvi/rng.hpp"
#include "aelsvi/kernel.hpp"
#include "aelsvi/kernel_model.hpp"
#include "aelsvi/information_gain.hpp"
#include "aelsvi/hyperparameters.hpp"
#include "aelsvi/environment.hpp"
#include "aelsvi/navigation.hpp"
#include "aelsvi/cartpole.hpp"
#include "aelsvi/finite_mdp.hpp"
#include "aelsvi/confidence_q.hpp"
#include "aelsvi/agents.hpp"
#include "aelsvi/contextual_bo.hpp"
#include "aelsvi/harness.hpp"
