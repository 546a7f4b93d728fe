#pragma once

#include "tenseg/dynamics.hpp"
#include "tenseg/errors.hpp"
#include "tenseg/form_finding.hpp"
#include "tenseg/geometry.hpp"
#include "tenseg/harness.hpp"
#include "tenseg/io.hpp"
#include "tenseg/reconfiguration.hpp"
#include "tenseg/stability.hpp"
