#pragma once

// Everything in one include.

#include "fdrag/app.hpp"
