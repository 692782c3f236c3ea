// SPDX-License-Identifier: Apache-2.0

#include "gsdf/cli.hpp"

int main(int argc, char** argv) { return gsdf::cli::run(argc, argv); }
