// SPDX-License-Identifier: Apache-2.0
//
// bflab - beamforming laboratory for weighted sum-rate precoding and learned beamformers
// Copyright (C) 2026 The bflab authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#ifndef BFLAB_ERRORS_HPP
#define BFLAB_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bflab
{
    // Numerical failures (degenerate iterates, singular systems) derive from NumericalError so
    // batch drivers can skip a sample without swallowing programming errors.
    class NumericalError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    class NotPositiveDefinite : public NumericalError
    {
    public:
        using NumericalError::NumericalError;
    };

    class SingularMse : public NumericalError
    {
    public:
        using NumericalError::NumericalError;
    };

    class SingularChannel : public NumericalError
    {
    public:
        using NumericalError::NumericalError;
    };

    class AllZeroOutput : public NumericalError
    {
    public:
        using NumericalError::NumericalError;
    };

    class ZeroChannel : public NumericalError
    {
    public:
        using NumericalError::NumericalError;
    };

    class DegenerateReference : public NumericalError
    {
    public:
        using NumericalError::NumericalError;
    };

    // Contract violations on shapes and argument domains
    class ShapeMismatch : public std::invalid_argument
    {
    public:
        using std::invalid_argument::invalid_argument;
    };

    class NotSquare : public ShapeMismatch
    {
    public:
        using ShapeMismatch::ShapeMismatch;
    };

    class NotHermitian : public std::invalid_argument
    {
    public:
        using std::invalid_argument::invalid_argument;
    };

    class NonPositiveDistance : public std::invalid_argument
    {
    public:
        using std::invalid_argument::invalid_argument;
    };

    class NonFiniteValue : public std::invalid_argument
    {
    public:
        using std::invalid_argument::invalid_argument;
    };

    // File and format problems
    class IoError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    class FormatError : public IoError
    {
    public:
        using IoError::IoError;
    };
}

#endif
