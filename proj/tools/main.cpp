// Copyright 2026 The drdt3 Authors. All rights reserved.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "drdt3/cli.hpp"

int main(int argc, char** argv) { return drdt3::cli::run(argc, argv, std::cout, std::cerr); }
