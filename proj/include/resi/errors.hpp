/*
   Copyright 2026 The resi Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <stdexcept>
#include <string>

namespace resi {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A formula was evaluated outside the region where it is defined.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A series or iteration failed to reach its tolerance within its cap.
class NumericalFailure : public Error {
public:
    using Error::Error;
};

class SingularDesign : public Error {
public:
    SingularDesign(const std::string& what, long column)
        : Error(what), column_(column) {}

    /// Index of the first column found to be linearly dependent, or -1.
    long column() const noexcept { return column_; }

private:
    long column_;
};

class SingularCovariance : public Error {
public:
    using Error::Error;
};

class DegenerateLeverage : public Error {
public:
    using Error::Error;
};

class NestingError : public Error {
public:
    using Error::Error;
};

class InvalidSpec : public Error {
public:
    using Error::Error;
};

class BootstrapFailure : public Error {
public:
    using Error::Error;
};

class IngestError : public Error {
public:
    using Error::Error;
};

} // namespace resi
