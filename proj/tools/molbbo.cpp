//
// molbbo - surrogate-based black-box optimization of molecular graphs
// SPDX-License-Identifier: Apache-2.0
//

#include <iostream>

#include "molbbo/cli.h"

int main(int argc, char **argv) {
  return molbbo::run_cli(argc, argv, std::cout, std::cerr);
}
