/* SPDX-FileCopyrightText: 2026 vlrep authors
 *
 * SPDX-License-Identifier: Apache-2.0 */

#pragma once

namespace vlrep {

inline constexpr const char* kArtifactVersion = "0.1.0";

} // namespace vlrep
