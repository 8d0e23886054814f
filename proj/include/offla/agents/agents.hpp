#pragma once

#include "offla/agents/agent_config.hpp"
#include "offla/agents/dqn.hpp"
#include "offla/agents/encoding.hpp"
#include "offla/agents/networks.hpp"
#include "offla/agents/offline.hpp"
