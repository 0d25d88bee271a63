#include "msm/cli/app.hpp"

int main(int argc, char** argv) { return msm::cli::run(argc, argv); }
