// Copyright 2026 The cfguard Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CFGUARD_REWRITER_H_
#define CFGUARD_REWRITER_H_

#include <string>

namespace cfguard {

// Request to rewrite `text` so that it refers to `target_subgroup` instead of
// `seed_subgroup`, both within `category`.
struct RewriteRequest {
  std::string text;
  std::string category;
  std::string seed_subgroup;
  std::string target_subgroup;
};

struct RewriteResult {
  bool rejected = false;
  std::string text;       // empty iff rejected
  std::string rationale;  // why rejected / how rewritten
};

// Produces identity counterfactuals of a text. Implementations: the built-in
// lexical term substituter (hermetic default) and an HTTP-backed client for
// an external LLM rewriter.
class Rewriter {
 public:
  virtual ~Rewriter() = default;
  virtual RewriteResult Rewrite(const RewriteRequest& request) = 0;
};

}  // namespace cfguard

#endif  // CFGUARD_REWRITER_H_
