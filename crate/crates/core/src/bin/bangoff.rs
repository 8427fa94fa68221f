// Copyright 2026 The bangoff Contributors
// SPDX-License-Identifier: Apache-2.0

fn main() {
    std::process::exit(bangoff::cli::main_with(std::env::args_os()));
}
