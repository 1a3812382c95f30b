import os
import sys
import subprocess

def create_directory_structure():
    print("Creating directory structure...")

    directories = [
        "output",
        "logs"
    ]

    for directory in directories:
        os.makedirs(directory, exist_ok=True)

    print("Directory structure created!")

def install_requirements():
    print("Installing dependencies...")

    requirements = [
        "numpy",
        "scipy",
        "networkx",
        "matplotlib",
        "pytest",
    ]

    with open("requirements.txt", "w", encoding="utf-8") as f:
        for req in requirements:
            f.write(f"{req}\n")

    try:
        subprocess.check_call([sys.executable, "-m", "pip", "install", "-r", "requirements.txt"])
        print("Dependencies installed!")
    except subprocess.CalledProcessError:
        print("Warning: Error installing dependencies, please run manually: pip install -r requirements.txt")

def main():
    print("Starting setup for the flow voice engine...")

    create_directory_structure()

    install_requirements()

    print("\nProject setup complete!")
    print("You can run the project with the following commands:")
    print("- Generate the synthetic corpus: python main.py data-gen --output-dir output/dataset")
    print("- Train: python main.py train --dataset output/dataset --output-dir output/train")
    print("- Sample new voices: python main.py gen-speakers --checkpoint output/train/model.nfvc --locale en-US --output output/new_voices.json")
    print("- Evaluate: python main.py eval --checkpoint output/train/model.nfvc --dataset output/dataset --metric nn")
    print("- Run the tests: python -m pytest tests")

def package():
    from setuptools import setup

    setup(
        name="flow-voice-engine",
        version="0.1.0",
        py_modules=["main", "config", "errors", "bundle"],
        packages=["conditioning", "diffcore", "evaluation", "flow", "modes", "speakergen", "synthworld"],
        install_requires=["numpy", "scipy", "networkx", "matplotlib"],
    )

if __name__ == "__main__":
    if len(sys.argv) > 1:
        package()
    else:
        main()
